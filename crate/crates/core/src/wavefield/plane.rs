use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{shock_formation_distance, Medium, SourceWaveform, TimeWaveform};
use crate::error::{config, Error, Result};

/// Discretization of the plane-wave march.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWaveGrid {
    /// Samples per simulation frame (one period for a sine source).
    pub n_time: usize,
    pub n_steps: usize,
    /// Step length, m.
    pub dz: f64,
    /// Total propagation distance, m.
    pub z_max: f64,
}

impl PlaneWaveGrid {
    pub fn new(n_time: usize, n_steps: usize, z_max: f64) -> Result<Self> {
        let g = Self { n_time, n_steps, dz: z_max / n_steps.max(1) as f64, z_max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_time < 64 || !self.n_time.is_power_of_two() {
            return Err(config(format!("n_time must be a power of two >= 64, got {}", self.n_time)));
        }
        if self.n_steps == 0 {
            return Err(config("n_steps must be positive"));
        }
        if !(self.z_max > 0.0 && self.z_max.is_finite()) {
            return Err(config(format!("z_max must be positive, got {}", self.z_max)));
        }
        let span = self.n_steps as f64 * self.dz;
        if ((span - self.z_max) / self.z_max).abs() > 1e-9 {
            return Err(config(format!("n_steps * dz = {span} does not match z_max = {}", self.z_max)));
        }
        Ok(())
    }
}

/// Marches a plane wave to `grid.z_max` and returns one frame of the
/// distorted waveform there.
pub fn simulate_westervelt_plane(
    medium: &Medium,
    src: &SourceWaveform,
    grid: &PlaneWaveGrid,
) -> Result<TimeWaveform> {
    march_westervelt_plane(medium, src, grid, |_, _| {})
}

/// Like [`simulate_westervelt_plane`], calling `observe(z, samples)` at the
/// source plane and after every step.
///
/// Each step applies the exact lossless simple-wave distortion (samples are
/// carried along their characteristics and resampled onto the uniform grid)
/// followed by exact per-harmonic thermoviscous decay.
pub fn march_westervelt_plane(
    medium: &Medium,
    src: &SourceWaveform,
    grid: &PlaneWaveGrid,
    mut observe: impl FnMut(f64, &[f64]),
) -> Result<TimeWaveform> {
    medium.validate()?;
    src.validate()?;
    grid.validate()?;

    let x_shock = shock_formation_distance(medium, src)?;
    let sigma = grid.z_max / x_shock;
    if sigma >= 1.0 {
        return Err(Error::Validity(format!(
            "z_max = {} m reaches the shock formation distance {x_shock} m (sigma = {sigma:.3})",
            grid.z_max
        )));
    }
    // A steepened waveform needs roughly 1/(1 - sigma) times more harmonics.
    let resolved = grid.n_time / (2 * src.frame_periods());
    let needed = 16.0 / (1.0 - sigma);
    if (resolved as f64) < needed {
        return Err(config(format!(
            "n_time = {} resolves {resolved} harmonics but sigma = {sigma:.3} needs {}; aliasing risk",
            grid.n_time,
            needed.ceil()
        )));
    }

    let n = grid.n_time;
    let frame = src.frame_duration();
    let dt = frame / n as f64;
    let mut p: Vec<f64> = (0..n).map(|i| src.sample(i as f64 * dt)).collect();
    observe(0.0, &p);

    let b = medium.beta / (medium.rho0 * medium.c.powi(3));
    let mut absorber = (medium.delta > 0.0).then(|| Absorber::new(n, frame, medium, grid.dz));
    let mut scratch = vec![0.0; n];
    let mut pos = vec![0.0; n];

    for step in 1..=grid.n_steps {
        if b != 0.0 {
            for (i, (s, &v)) in pos.iter_mut().zip(&p).enumerate() {
                *s = i as f64 * dt - b * v * grid.dz;
            }
            resample_periodic(&pos, &p, frame, dt, &mut scratch).map_err(|_| {
                Error::Numerical(format!(
                    "characteristics crossed at step {step}; dz = {} m is too coarse for this amplitude",
                    grid.dz
                ))
            })?;
            std::mem::swap(&mut p, &mut scratch);
        }
        if let Some(abs) = absorber.as_mut() {
            abs.apply(&mut p);
        }
        observe(step as f64 * grid.dz, &p);
    }
    TimeWaveform::new(p, dt)
}

struct Absorber {
    decay: Vec<f64>,
    buf: Vec<Complex64>,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Absorber {
    fn new(n: usize, frame: f64, medium: &Medium, dz: f64) -> Self {
        let mut planner = FftPlanner::new();
        let decay = (0..n)
            .map(|k| {
                let h = k.min(n - k) as f64;
                let omega = 2.0 * std::f64::consts::PI * h / frame;
                (-medium.attenuation(omega) * dz).exp()
            })
            .collect();
        Self {
            decay,
            buf: vec![Complex64::default(); n],
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn apply(&mut self, p: &mut [f64]) {
        for (b, &v) in self.buf.iter_mut().zip(p.iter()) {
            *b = Complex64::new(v, 0.0);
        }
        self.fwd.process(&mut self.buf);
        for (b, &d) in self.buf.iter_mut().zip(&self.decay) {
            *b *= d;
        }
        self.inv.process(&mut self.buf);
        let scale = 1.0 / p.len() as f64;
        for (v, b) in p.iter_mut().zip(&self.buf) {
            *v = b.re * scale;
        }
    }
}

/// Cubic Lagrange resampling of periodic, monotonically ordered nonuniform
/// samples `(pos, val)` onto the uniform grid `j * dt`.
fn resample_periodic(pos: &[f64], val: &[f64], period: f64, dt: f64, out: &mut [f64]) -> Result<(), ()> {
    let n = pos.len() as isize;
    let at = |i: isize| -> (f64, f64) {
        let k = i.div_euclid(n);
        let r = i.rem_euclid(n) as usize;
        (pos[r] + k as f64 * period, val[r])
    };
    for w in pos.windows(2) {
        if w[1] <= w[0] {
            return Err(());
        }
    }
    if pos[0] + period <= pos[pos.len() - 1] {
        return Err(());
    }

    let mut i: isize = 0;
    while at(i).0 > 0.0 {
        i -= 1;
    }
    for (j, o) in out.iter_mut().enumerate() {
        let t = j as f64 * dt;
        while at(i + 1).0 <= t {
            i += 1;
        }
        let pts = [at(i - 1), at(i), at(i + 1), at(i + 2)];
        if t == pts[1].0 {
            *o = pts[1].1;
            continue;
        }
        let mut acc = 0.0;
        for a in 0..4 {
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    l *= (t - pts[b].0) / (pts[a].0 - pts[b].0);
                }
            }
            acc += l * pts[a].1;
        }
        *o = acc;
    }
    Ok(())
}
