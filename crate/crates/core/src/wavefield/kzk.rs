use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Medium, SourceWaveform, WaveKind};
use crate::error::{config, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// Diffraction, absorption, nonlinearity, each over a full step.
    #[default]
    FirstOrder,
    /// Symmetric half-steps of the linear substeps around a full nonlinear step.
    Strang,
}

/// Axisymmetric march grid. Radial points sit at `r_i = i * dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisymGrid {
    pub n_r: usize,
    pub dr: f64,
    pub n_z: usize,
    pub dz: f64,
    pub n_harm: usize,
    #[serde(default)]
    pub splitting: Splitting,
}

impl AxisymGrid {
    pub fn validate(&self, source_radius: f64) -> Result<()> {
        if self.n_r < 32 {
            return Err(config(format!("n_r must be at least 32, got {}", self.n_r)));
        }
        if self.n_harm < 2 {
            return Err(config(format!("n_harm must be at least 2, got {}", self.n_harm)));
        }
        if !(self.dr > 0.0 && self.dz > 0.0) {
            return Err(config("dr and dz must be positive"));
        }
        if self.n_z == 0 {
            return Err(config("n_z must be positive"));
        }
        if self.dr * (self.n_r as f64) < 4.0 * source_radius {
            return Err(config(format!(
                "radial domain {} m is narrower than 4x the source radius {source_radius} m",
                self.dr * self.n_r as f64
            )));
        }
        Ok(())
    }

    pub fn z_max(&self) -> f64 {
        self.n_z as f64 * self.dz
    }
}

/// Radial amplitude profile of the source, relative to `p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SourceProfile {
    /// `exp(-(r/a)^2)`.
    Gaussian { radius: f64 },
    /// Uniform disc of radius `a`.
    Piston { radius: f64 },
}

impl SourceProfile {
    pub fn radius(&self) -> f64 {
        match *self {
            SourceProfile::Gaussian { radius } | SourceProfile::Piston { radius } => radius,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            SourceProfile::Gaussian { radius } => (-(r / radius).powi(2)).exp(),
            SourceProfile::Piston { radius } => {
                if r <= radius {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Complex harmonic amplitudes over the radial grid. The pressure is
/// `p = sum_n Re(A_n(r) exp(i n omega tau))`, so `|A_n|` is the amplitude of
/// harmonic `n` in Pa.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicField {
    n_harm: usize,
    n_r: usize,
    dr: f64,
    amps: Vec<Complex64>,
    pub z: f64,
}

impl HarmonicField {
    pub fn zeros(n_harm: usize, n_r: usize, dr: f64) -> Self {
        Self { n_harm, n_r, dr, amps: vec![Complex64::default(); n_harm * n_r], z: 0.0 }
    }

    pub fn from_parts(n_harm: usize, n_r: usize, dr: f64, z: f64, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != n_harm * n_r {
            return Err(Error::Data(format!(
                "expected {} amplitudes for {n_harm} harmonics x {n_r} radii, got {}",
                n_harm * n_r,
                amps.len()
            )));
        }
        Ok(Self { n_harm, n_r, dr, amps, z })
    }

    pub fn n_harm(&self) -> usize {
        self.n_harm
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    /// Amplitudes of harmonic `n` (1-based) along the radius.
    pub fn harmonic(&self, n: usize) -> &[Complex64] {
        &self.amps[(n - 1) * self.n_r..n * self.n_r]
    }

    fn harmonic_mut(&mut self, n: usize) -> &mut [Complex64] {
        &mut self.amps[(n - 1) * self.n_r..n * self.n_r]
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn on_axis(&self, n: usize) -> f64 {
        self.harmonic(n)[0].norm()
    }

    /// Radially integrated intensity `sum_n int |A_n|^2 2 pi r dr`.
    pub fn energy(&self) -> f64 {
        let vol = cell_volumes(self.n_r, self.dr);
        crate::dsp::kahan_sum(
            self.amps.chunks(self.n_r).flat_map(|row| row.iter().zip(&vol).map(|(a, v)| a.norm_sqr() * v)),
        )
    }
}

fn cell_volumes(n_r: usize, dr: f64) -> Vec<f64> {
    (0..n_r)
        .map(|i| if i == 0 { PI * 0.25 * dr * dr } else { 2.0 * PI * i as f64 * dr * dr })
        .collect()
}

/// Crank-Nicolson step for one harmonic, with the Thomas elimination
/// factors precomputed.
struct CnStep {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    a: Complex64,
    cprime: Vec<Complex64>,
    inv_denom: Vec<Complex64>,
}

impl CnStep {
    /// Finite-volume radial Laplacian, zero flux through the axis and the outer edge.
    fn new(n_r: usize, dr: f64, k: f64, h: f64) -> Self {
        let vol = cell_volumes(n_r, dr);
        let flux: Vec<f64> = (0..n_r)
            .map(|i| if i + 1 < n_r { 2.0 * PI * (i as f64 + 0.5) * dr / dr } else { 0.0 })
            .collect();
        let mut lower = vec![0.0; n_r];
        let mut diag = vec![0.0; n_r];
        let mut upper = vec![0.0; n_r];
        for i in 0..n_r {
            let left = if i > 0 { flux[i - 1] } else { 0.0 };
            lower[i] = left / vol[i];
            upper[i] = flux[i] / vol[i];
            diag[i] = -(left + flux[i]) / vol[i];
        }
        // (h/2) * D with D = -i/(2k) L
        let a = Complex64::new(0.0, -h / (4.0 * k));
        let mut cprime = vec![Complex64::default(); n_r];
        let mut inv_denom = vec![Complex64::default(); n_r];
        for i in 0..n_r {
            let b = Complex64::new(1.0, 0.0) - a * diag[i];
            let low = -a * lower[i];
            let up = -a * upper[i];
            let denom = if i == 0 { b } else { b - low * cprime[i - 1] };
            inv_denom[i] = 1.0 / denom;
            cprime[i] = up * inv_denom[i];
        }
        Self { lower, diag, upper, a, cprime, inv_denom }
    }

    fn apply(&self, p: &mut [Complex64], rhs: &mut [Complex64]) {
        let n = p.len();
        for i in 0..n {
            let mut lp = self.diag[i] * p[i];
            if i > 0 {
                lp += self.lower[i] * p[i - 1];
            }
            if i + 1 < n {
                lp += self.upper[i] * p[i + 1];
            }
            rhs[i] = p[i] + self.a * lp;
        }
        // forward sweep
        let mut prev = Complex64::default();
        for i in 0..n {
            let low = -self.a * self.lower[i];
            let d = if i == 0 { rhs[i] } else { rhs[i] - low * prev };
            rhs[i] = d * self.inv_denom[i];
            prev = rhs[i];
        }
        // back substitution
        p[n - 1] = rhs[n - 1];
        for i in (0..n - 1).rev() {
            p[i] = rhs[i] - self.cprime[i] * p[i + 1];
        }
    }
}

/// Split-step KZK marcher in the harmonic domain.
pub struct KzkSolver {
    grid: AxisymGrid,
    p0: f64,
    field: HarmonicField,
    diffract: Vec<CnStep>,
    absorb: Vec<f64>,
    layer: Vec<f64>,
    nl_coeff: Vec<f64>,
    linear: bool,
    rhs: Vec<Complex64>,
    step_index: usize,
}

impl KzkSolver {
    pub fn new(medium: &Medium, src: &SourceWaveform, profile: &SourceProfile, grid: &AxisymGrid) -> Result<Self> {
        medium.validate()?;
        src.validate()?;
        grid.validate(profile.radius())?;
        if src.kind != WaveKind::Sine {
            return Err(config("the KZK solver propagates a continuous-wave (sine) source"));
        }
        let radius = profile.radius();
        if !(radius > 0.0) {
            return Err(config("source radius must be positive"));
        }
        let omega = src.omega();
        let c = medium.c;
        let n_r = grid.n_r;
        let nh = grid.n_harm;

        let linear_h = match grid.splitting {
            Splitting::FirstOrder => grid.dz,
            Splitting::Strang => 0.5 * grid.dz,
        };
        let diffract = (1..=nh)
            .map(|n| CnStep::new(n_r, grid.dr, n as f64 * omega / c, linear_h))
            .collect();
        let absorb = (1..=nh)
            .map(|n| (-medium.attenuation(n as f64 * omega) * linear_h).exp())
            .collect();

        // Quadratic damping ramp over the outer 10% of the radial grid.
        let k1 = omega / c;
        let width_pts = (n_r / 10).max(1);
        let start = n_r - width_pts;
        let width = width_pts as f64 * grid.dr;
        let spread = 1.0 / (k1 * radius);
        let sigma_max = 30.0 * spread / width;
        let layer = (0..n_r)
            .map(|i| {
                if i < start {
                    1.0
                } else {
                    let x = (i - start + 1) as f64 / width_pts as f64;
                    (-sigma_max * x * x * linear_h).exp()
                }
            })
            .collect();

        let nl_coeff =
            (1..=nh).map(|n| medium.beta * n as f64 * omega / (2.0 * medium.rho0 * c.powi(3))).collect();

        let mut field = HarmonicField::zeros(nh, n_r, grid.dr);
        let phase = Complex64::from_polar(src.p0, src.phase - 0.5 * PI);
        for (i, a) in field.harmonic_mut(1).iter_mut().enumerate() {
            *a = phase * profile.eval(i as f64 * grid.dr);
        }
        Ok(Self {
            grid: *grid,
            p0: src.p0,
            field,
            diffract,
            absorb,
            layer,
            nl_coeff,
            linear: medium.beta == 0.0,
            rhs: vec![Complex64::default(); n_r],
            step_index: 0,
        })
    }

    pub fn field(&self) -> &HarmonicField {
        &self.field
    }

    pub fn into_field(self) -> HarmonicField {
        self.field
    }

    pub fn steps_taken(&self) -> usize {
        self.step_index
    }

    pub fn step(&mut self) -> Result<()> {
        match self.grid.splitting {
            Splitting::FirstOrder => {
                self.diffraction()?;
                self.absorption()?;
                self.nonlinearity(self.grid.dz)?;
            }
            Splitting::Strang => {
                self.diffraction()?;
                self.absorption()?;
                self.nonlinearity(self.grid.dz)?;
                self.absorption()?;
                self.diffraction()?;
            }
        }
        self.step_index += 1;
        self.field.z = self.step_index as f64 * self.grid.dz;
        Ok(())
    }

    /// Marches all `n_z` steps, calling `observe` at the source plane and after each step.
    pub fn run(&mut self, mut observe: impl FnMut(&HarmonicField)) -> Result<()> {
        if self.step_index == 0 {
            observe(&self.field);
        }
        while self.step_index < self.grid.n_z {
            self.step()?;
            observe(&self.field);
        }
        Ok(())
    }

    fn check(&self, substep: &'static str) -> Result<()> {
        let limit = 10.0 * self.p0;
        for (idx, a) in self.field.amps.iter().enumerate() {
            let mag = a.norm();
            if !(mag <= limit) {
                return Err(Error::Divergence {
                    substep,
                    z: self.field.z + self.grid.dz,
                    harmonic: idx / self.grid.n_r + 1,
                    magnitude: mag,
                });
            }
        }
        Ok(())
    }

    fn diffraction(&mut self) -> Result<()> {
        for n in 1..=self.grid.n_harm {
            let row = &mut self.field.amps[(n - 1) * self.grid.n_r..n * self.grid.n_r];
            if row.iter().all(|a| *a == Complex64::default()) {
                continue;
            }
            self.diffract[n - 1].apply(row, &mut self.rhs);
            for (a, d) in row.iter_mut().zip(&self.layer) {
                *a *= d;
            }
        }
        self.check("diffraction")
    }

    fn absorption(&mut self) -> Result<()> {
        for n in 1..=self.grid.n_harm {
            let d = self.absorb[n - 1];
            if d != 1.0 {
                for a in self.field.harmonic_mut(n) {
                    *a *= d;
                }
            }
        }
        self.check("absorption")
    }

    /// RK4 over `h` of `dA_n/dz = i kappa_n [p^2]_n` at every radius.
    fn nonlinearity(&mut self, h: f64) -> Result<()> {
        if self.linear {
            return Ok(());
        }
        let nh = self.grid.n_harm;
        let n_r = self.grid.n_r;
        let mut a = vec![Complex64::default(); nh];
        let mut tmp = vec![Complex64::default(); nh];
        let mut k = [
            vec![Complex64::default(); nh],
            vec![Complex64::default(); nh],
            vec![Complex64::default(); nh],
            vec![Complex64::default(); nh],
        ];
        for i in 0..n_r {
            for n in 0..nh {
                a[n] = self.field.amps[n * n_r + i];
            }
            if a.iter().all(|v| v.norm_sqr() == 0.0) {
                continue;
            }
            let coeffs = &self.nl_coeff;
            let rate = |x: &[Complex64], out: &mut [Complex64]| {
                for n in 1..=nh {
                    let mut sum = Complex64::default();
                    for m in 1..n {
                        sum += x[m - 1] * x[n - m - 1];
                    }
                    let mut cross = Complex64::default();
                    for m in n + 1..=nh {
                        cross += x[m - 1] * x[m - n - 1].conj();
                    }
                    let q = 0.5 * (sum + 2.0 * cross);
                    out[n - 1] = Complex64::new(0.0, coeffs[n - 1]) * q;
                }
            };
            rate(&a, &mut k[0]);
            for n in 0..nh {
                tmp[n] = a[n] + 0.5 * h * k[0][n];
            }
            rate(&tmp, &mut k[1]);
            for n in 0..nh {
                tmp[n] = a[n] + 0.5 * h * k[1][n];
            }
            rate(&tmp, &mut k[2]);
            for n in 0..nh {
                tmp[n] = a[n] + h * k[2][n];
            }
            rate(&tmp, &mut k[3]);
            for n in 0..nh {
                self.field.amps[n * n_r + i] =
                    a[n] + h / 6.0 * (k[0][n] + 2.0 * k[1][n] + 2.0 * k[2][n] + k[3][n]);
            }
        }
        self.check("nonlinearity")
    }
}

/// Marches the axisymmetric KZK equation to `z = n_z * dz`.
pub fn simulate_kzk_axisym(
    medium: &Medium,
    src: &SourceWaveform,
    profile: &SourceProfile,
    grid: &AxisymGrid,
) -> Result<HarmonicField> {
    let mut solver = KzkSolver::new(medium, src, profile, grid)?;
    solver.run(|_| {})?;
    Ok(solver.into_field())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::{analytic_gaussian_axis, rayleigh_distance};

    fn linear_water() -> Medium {
        Medium { beta: 0.0, delta: 0.0, ..Medium::water() }
    }

    #[test]
    fn source_plane_matches_profile() {
        let m = Medium::water();
        let s = SourceWaveform::sine(1e5, 1e6);
        let prof = SourceProfile::Gaussian { radius: 5e-3 };
        let grid = AxisymGrid { n_r: 128, dr: 5e-3 / 16.0, n_z: 1, dz: 1e-3, n_harm: 4, splitting: Splitting::FirstOrder };
        let solver = KzkSolver::new(&m, &s, &prof, &grid).unwrap();
        let f = solver.field();
        for i in 0..f.n_r() {
            let r = i as f64 * f.dr();
            assert!((f.harmonic(1)[i].norm() - 1e5 * prof.eval(r)).abs() < 1e-9);
            assert_eq!(f.harmonic(2)[i], Complex64::default());
        }
    }

    #[test]
    fn gaussian_beam_at_rayleigh_distance() {
        let m = linear_water();
        let s = SourceWaveform::sine(1e5, 1e6);
        let a = 5e-3;
        let zr = rayleigh_distance(&s, a, &m);
        let n_z = 200;
        let grid = AxisymGrid { n_r: 256, dr: a / 32.0, n_z, dz: zr / n_z as f64, n_harm: 2, splitting: Splitting::FirstOrder };
        let f = simulate_kzk_axisym(&m, &s, &SourceProfile::Gaussian { radius: a }, &grid).unwrap();
        let expect = analytic_gaussian_axis(&s, a, &m, zr).unwrap();
        assert!((f.on_axis(1) - expect).abs() / expect < 0.02, "{} vs {expect}", f.on_axis(1));
    }

    #[test]
    fn linear_lossless_energy_is_conserved() {
        let m = linear_water();
        let s = SourceWaveform::sine(1e5, 1e6);
        let a = 5e-3;
        let zr = rayleigh_distance(&s, a, &m);
        let grid = AxisymGrid { n_r: 256, dr: a / 24.0, n_z: 100, dz: zr / 100.0, n_harm: 3, splitting: Splitting::Strang };
        let mut solver = KzkSolver::new(&m, &s, &SourceProfile::Gaussian { radius: a }, &grid).unwrap();
        let e0 = solver.field().energy();
        let mut worst: f64 = 0.0;
        solver.run(|f| worst = worst.max((f.energy() / e0 - 1.0).abs())).unwrap();
        assert!(worst < 0.01, "relative drift {worst}");
    }

    #[test]
    fn rejects_narrow_domain_and_pulses() {
        let m = Medium::water();
        let s = SourceWaveform::sine(1e5, 1e6);
        let grid = AxisymGrid { n_r: 32, dr: 1e-4, n_z: 1, dz: 1e-3, n_harm: 2, splitting: Splitting::FirstOrder };
        assert!(KzkSolver::new(&m, &s, &SourceProfile::Gaussian { radius: 5e-3 }, &grid).is_err());
        let ok = AxisymGrid { dr: 1e-3, ..grid };
        let pulse = SourceWaveform { kind: WaveKind::GaussianPulse, ..s };
        assert!(KzkSolver::new(&m, &pulse, &SourceProfile::Gaussian { radius: 5e-3 }, &ok).is_err());
        let one_harm = AxisymGrid { n_harm: 1, ..ok };
        assert!(KzkSolver::new(&m, &s, &SourceProfile::Gaussian { radius: 5e-3 }, &one_harm).is_err());
    }

    #[test]
    fn divergence_names_the_substep() {
        // A step far beyond the shock distance blows up the nonlinear update.
        let m = Medium::water();
        let s = SourceWaveform::sine(5e7, 1e6);
        let grid = AxisymGrid { n_r: 64, dr: 1e-3, n_z: 5, dz: 0.05, n_harm: 8, splitting: Splitting::FirstOrder };
        let err = simulate_kzk_axisym(&m, &s, &SourceProfile::Gaussian { radius: 0.01 }, &grid).unwrap_err();
        match err {
            Error::Divergence { substep, .. } => assert_eq!(substep, "nonlinearity"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn thermoviscous_decay_on_axis() {
        let m = Medium { beta: 0.0, delta: 4.33e-3, ..Medium::water() };
        let s = SourceWaveform::sine(1e5, 1e6);
        let alpha = m.attenuation(s.omega());
        let a = 0.05;
        let z_end = 3.0 / alpha;
        let n_z = 120;
        let grid = AxisymGrid { n_r: 64, dr: a / 8.0, n_z, dz: z_end / n_z as f64, n_harm: 2, splitting: Splitting::FirstOrder };
        let mut solver = KzkSolver::new(&m, &s, &SourceProfile::Gaussian { radius: a }, &grid).unwrap();
        let mut worst: f64 = 0.0;
        solver
            .run(|f| {
                let expect = s.p0 * (-alpha * f.z).exp();
                worst = worst.max((f.on_axis(1) - expect).abs() / expect);
            })
            .unwrap();
        assert!(worst < 0.01, "worst relative error {worst}");
    }

    #[test]
    fn second_harmonic_initial_slope() {
        let m = Medium { delta: 0.0, ..Medium::water() };
        let s = SourceWaveform::sine(1e5, 1e6);
        let x_shock = crate::wavefield::shock_formation_distance(&m, &s).unwrap();
        let a = 0.05;
        let z_end = 0.05 * x_shock;
        let grid = AxisymGrid { n_r: 64, dr: a / 8.0, n_z: 50, dz: z_end / 50.0, n_harm: 8, splitting: Splitting::FirstOrder };
        let f = simulate_kzk_axisym(&m, &s, &SourceProfile::Gaussian { radius: a }, &grid).unwrap();
        let slope = f.on_axis(2) / z_end;
        let expect = m.beta * s.omega() * s.p0 * s.p0 / (2.0 * m.rho0 * m.c.powi(3));
        assert!((slope / expect - 1.0).abs() < 0.05, "slope ratio {}", slope / expect);
    }
}
