//! Python bindings for `nars-core`.
//!
//! Signals cross the boundary as lists of floats (multichannel signals as
//! lists of channels). Heavy calls release the GIL.

use nars_core::frontend::{self as fe, AzimuthGrid, FilterBankSpec, FrontEndParams, MicArrayGeometry};
use nars_core::rl::{self, RlConfig, TuningEnv};
use nars_core::scene::{self, ScenarioConfig};
use nars_core::wavefield::{self as wf, AxisymGrid, SourceProfile, SourceWaveform, TimeWaveform};
use nars_core::{Category, Error};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

create_exception!(nars, NarsError, PyException, "Base class for errors raised by the library.");
create_exception!(nars, ConfigError, NarsError, "Invalid argument or configuration.");
create_exception!(nars, DataError, NarsError, "Malformed or inconsistent input data.");
create_exception!(nars, NumericalError, NarsError, "A computation diverged or lost precision.");
create_exception!(nars, ValidityError, NarsError, "Request outside a solver's physical validity range.");

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.category() {
        Category::Config => ConfigError::new_err(msg),
        Category::Data => DataError::new_err(msg),
        Category::Numerical => NumericalError::new_err(msg),
        Category::Validity => ValidityError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for nars_core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Propagation medium.
#[pyclass(module = "nars", from_py_object)]
#[derive(Clone)]
struct Medium {
    inner: wf::Medium,
}

#[pymethods]
impl Medium {
    #[new]
    #[pyo3(signature = (rho0, c, beta, delta))]
    fn new(rho0: f64, c: f64, beta: f64, delta: f64) -> PyResult<Self> {
        Ok(Self { inner: wf::Medium::new(rho0, c, beta, delta).py_err()? })
    }

    #[staticmethod]
    fn water() -> Self {
        Self { inner: wf::Medium::water() }
    }

    #[staticmethod]
    fn air() -> Self {
        Self { inner: wf::Medium::air() }
    }

    #[getter]
    fn rho0(&self) -> f64 {
        self.inner.rho0
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!("Medium(rho0={}, c={}, beta={}, delta={})", m.rho0, m.c, m.beta, m.delta)
    }
}

/// Plane-wave shock formation distance for a sine of amplitude `p0` at `f0`, m.
#[pyfunction]
fn shock_distance(medium: &Medium, p0: f64, f0: f64) -> PyResult<f64> {
    wf::shock_formation_distance(&medium.inner, &SourceWaveform::sine(p0, f0)).py_err()
}

/// Normalized amplitude of harmonic `n` of a lossless plane wave at `sigma`.
#[pyfunction]
fn fubini_harmonic(n: u32, sigma: f64) -> PyResult<f64> {
    wf::fubini_harmonics(n, sigma).py_err()
}

/// Marches a sine of amplitude `p0` at `f0` to `z_max`; returns one period
/// of the waveform there and its sample interval.
#[pyfunction]
#[pyo3(signature = (medium, p0, f0, z_max, n_time=1024, n_steps=200))]
fn westervelt_plane(
    py: Python<'_>,
    medium: &Medium,
    p0: f64,
    f0: f64,
    z_max: f64,
    n_time: usize,
    n_steps: usize,
) -> PyResult<(Vec<f64>, f64)> {
    let m = medium.inner;
    let w = py
        .detach(|| {
            let grid = wf::PlaneWaveGrid::new(n_time, n_steps, z_max)?;
            wf::simulate_westervelt_plane(&m, &SourceWaveform::sine(p0, f0), &grid)
        })
        .py_err()?;
    Ok((w.samples, w.dt))
}

/// Amplitudes of harmonics `1..=n_max` of `f0` in a uniformly sampled waveform.
#[pyfunction]
fn harmonic_spectrum(samples: Vec<f64>, dt: f64, f0: f64, n_max: usize) -> PyResult<Vec<f64>> {
    let w = TimeWaveform::new(samples, dt).py_err()?;
    wf::harmonic_spectrum(&w, f0, n_max).py_err()
}

/// Complex harmonic amplitudes on a radial grid at one range.
#[pyclass(module = "nars", frozen)]
struct HarmonicField {
    inner: wf::HarmonicField,
}

#[pymethods]
impl HarmonicField {
    #[staticmethod]
    fn from_bytes(data: &[u8], dr: f64) -> PyResult<Self> {
        Ok(Self { inner: wf::HarmonicField::from_dump_bytes(data, dr).py_err()? })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_dump_bytes())
    }

    #[getter]
    fn z(&self) -> f64 {
        self.inner.z
    }

    #[getter]
    fn n_harm(&self) -> usize {
        self.inner.n_harm()
    }

    #[getter]
    fn n_r(&self) -> usize {
        self.inner.n_r()
    }

    #[getter]
    fn dr(&self) -> f64 {
        self.inner.dr()
    }

    /// |p| of harmonic `n` (1-based) on the axis, Pa.
    fn on_axis(&self, n: usize) -> PyResult<f64> {
        self.check(n)?;
        Ok(self.inner.on_axis(n))
    }

    /// Radial profile of harmonic `n` (1-based) as complex numbers.
    fn harmonic(&self, n: usize) -> PyResult<Vec<Complex64>> {
        self.check(n)?;
        Ok(self.inner.harmonic(n).to_vec())
    }

    fn energy(&self) -> f64 {
        self.inner.energy()
    }
}

impl HarmonicField {
    fn check(&self, n: usize) -> PyResult<()> {
        if n == 0 || n > self.inner.n_harm() {
            return Err(ConfigError::new_err(format!("harmonic {n} outside 1..={}", self.inner.n_harm())));
        }
        Ok(())
    }
}

/// Marches a focused-free axisymmetric beam with the KZK solver.
#[pyfunction]
#[pyo3(signature = (medium, p0, f0, radius, n_r, dr, n_z, dz, n_harm, piston=false))]
#[allow(clippy::too_many_arguments)]
fn kzk_axisym(
    py: Python<'_>,
    medium: &Medium,
    p0: f64,
    f0: f64,
    radius: f64,
    n_r: usize,
    dr: f64,
    n_z: usize,
    dz: f64,
    n_harm: usize,
    piston: bool,
) -> PyResult<HarmonicField> {
    let m = medium.inner;
    let profile = if piston { SourceProfile::Piston { radius } } else { SourceProfile::Gaussian { radius } };
    let grid = AxisymGrid { n_r, dr, n_z, dz, n_harm, splitting: Default::default() };
    let inner = py.detach(|| wf::simulate_kzk_axisym(&m, &SourceWaveform::sine(p0, f0), &profile, &grid)).py_err()?;
    Ok(HarmonicField { inner })
}

/// A synthetic room scene.
#[pyclass(module = "nars", frozen, from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ScenarioConfig::from_toml(text).py_err()? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// The mistuned reference scene used for front-end tuning.
    #[staticmethod]
    fn mistuned() -> Self {
        Self { inner: rl::mistuned_scenario().0 }
    }

    /// A random layout of this scene: same array shape and room, new
    /// position, talker and seed.
    fn randomized(&self, index: u64) -> PyResult<Self> {
        Ok(Self { inner: scene::randomized_scenario(&self.inner, index).py_err()? })
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.room.fs
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.room.c
    }

    #[getter]
    fn mic_positions(&self) -> Vec<[f64; 3]> {
        self.inner.mic_positions.clone()
    }

    #[getter]
    fn source_pos(&self) -> [f64; 3] {
        self.inner.source_pos
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn true_azimuth(&self) -> PyResult<f64> {
        self.inner.true_azimuth().py_err()
    }

    /// Renders the scene. Keys: `fs`, `dry`, `target`, `noise`, `mics`, and
    /// `echo`, `far` (None without an echo path).
    fn render<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let cfg = self.inner.clone();
        let r = py.detach(|| scene::render_scene(&cfg)).py_err()?;
        let d = PyDict::new(py);
        d.set_item("fs", r.fs)?;
        d.set_item("dry", r.dry)?;
        d.set_item("target", r.target)?;
        d.set_item("noise", r.noise)?;
        d.set_item("mics", r.mics)?;
        d.set_item("echo", r.echo)?;
        d.set_item("far", r.far)?;
        Ok(d)
    }
}

/// Streaming front end: filter bank, echo canceller, beamformer, band gains.
#[pyclass(module = "nars")]
struct FrontEnd {
    inner: fe::FrontEnd,
}

#[pymethods]
impl FrontEnd {
    #[new]
    #[pyo3(signature = (mic_positions, fs, c=343.0, m_bands=32, hop=16, taps_per_band=12, aec_taps=16, eps_reg=1e-6))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        mic_positions: Vec<[f64; 3]>,
        fs: f64,
        c: f64,
        m_bands: usize,
        hop: usize,
        taps_per_band: usize,
        aec_taps: usize,
        eps_reg: f64,
    ) -> PyResult<Self> {
        let spec = FilterBankSpec::design(m_bands, hop, taps_per_band, fs).py_err()?;
        let geom = MicArrayGeometry::new(mic_positions, fs, c).py_err()?;
        Ok(Self { inner: fe::FrontEnd::new(spec, geom, aec_taps, eps_reg).py_err()? })
    }

    /// Samples of delay between input and output.
    #[getter]
    fn latency(&self) -> usize {
        self.inner.latency()
    }

    #[getter]
    fn hop(&self) -> usize {
        self.inner.spec().hop
    }

    fn reset(&mut self) {
        self.inner.reset();
    }

    /// Processes one chunk (a whole number of hops), keeping state between calls.
    #[pyo3(signature = (mics, far=None, mu=0.0, steer_deg=0.0, gains=None))]
    fn process_chunk(
        &mut self,
        py: Python<'_>,
        mics: Vec<Vec<f64>>,
        far: Option<Vec<f64>>,
        mu: f64,
        steer_deg: f64,
        gains: Option<Vec<f64>>,
    ) -> PyResult<Vec<f64>> {
        let params = self.params(mu, steer_deg, gains)?;
        let inner = &mut self.inner;
        py.detach(|| inner.process_chunk(&params, &mics, far.as_deref())).py_err()
    }

    /// Processes a whole recording from a fresh state; the output is
    /// latency-compensated and as long as the input.
    #[pyo3(signature = (mics, far=None, mu=0.0, steer_deg=0.0, gains=None))]
    fn process(
        &mut self,
        py: Python<'_>,
        mics: Vec<Vec<f64>>,
        far: Option<Vec<f64>>,
        mu: f64,
        steer_deg: f64,
        gains: Option<Vec<f64>>,
    ) -> PyResult<Vec<f64>> {
        let params = self.params(mu, steer_deg, gains)?;
        let inner = &mut self.inner;
        py.detach(|| inner.process_aligned(&params, &mics, far.as_deref())).py_err()
    }
}

impl FrontEnd {
    fn params(&self, mu: f64, steer_deg: f64, gains: Option<Vec<f64>>) -> PyResult<FrontEndParams> {
        let mut p = FrontEndParams::unity(self.inner.spec(), mu, steer_deg);
        if let Some(g) = gains {
            if g.len() != p.gains.len() {
                return Err(ConfigError::new_err(format!("gains needs {} entries, got {}", p.gains.len(), g.len())));
            }
            p.gains = g;
        }
        Ok(p)
    }
}

/// Steered-response-power azimuth of `mics`; returns the azimuth in degrees
/// and the `(angle, power)` curve.
#[pyfunction]
#[pyo3(signature = (mic_positions, fs, mics, c=343.0, grid_points=360))]
fn localize(
    py: Python<'_>,
    mic_positions: Vec<[f64; 3]>,
    fs: f64,
    mics: Vec<Vec<f64>>,
    c: f64,
    grid_points: usize,
) -> PyResult<(f64, Vec<(f64, f64)>)> {
    let geom = MicArrayGeometry::new(mic_positions, fs, c).py_err()?;
    let grid = AzimuthGrid::new(grid_points).py_err()?;
    let loc = py.detach(|| fe::srp_localize(&geom, &mics, &grid)).py_err()?;
    Ok((loc.azimuth_deg, loc.curve))
}

/// Smallest absolute difference between two azimuths, degrees.
#[pyfunction]
fn angular_error(a: f64, b: f64) -> f64 {
    fe::angular_error(a, b)
}

/// Scale-invariant SNR of `estimate` against `reference`, dB.
#[pyfunction]
fn si_snr(reference: Vec<f64>, estimate: Vec<f64>) -> PyResult<f64> {
    scene::si_snr(&reference, &estimate).py_err()
}

#[pyfunction]
fn snr_db(signal: Vec<f64>, noise: Vec<f64>) -> f64 {
    scene::snr_db(&signal, &noise)
}

/// Trains a tuning policy with PPO on `scenario` and evaluates it against
/// uniformly random actions. `rl_toml` holds the `[rl]` section fields;
/// omitted, the mistuned preset is used.
#[pyfunction]
#[pyo3(signature = (scenario, rl_toml=None, seed=0, parallel=1))]
fn train<'py>(
    py: Python<'py>,
    scenario: &Scenario,
    rl_toml: Option<&str>,
    seed: u64,
    parallel: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: RlConfig = match rl_toml {
        Some(t) => RlConfig::from_toml(t).py_err()?,
        None => rl::mistuned_scenario().1,
    };
    cfg.validate().py_err()?;
    if parallel == 0 {
        return Err(ConfigError::new_err("parallel must be at least 1"));
    }
    let sc = scenario.inner.clone();
    let (curve, ours, random, ckpt) = py
        .detach(|| -> nars_core::Result<_> {
            let env = TuningEnv::new(&sc, &cfg.env)?;
            let init = rl::init_policy(&cfg, seed)?;
            let out = rl::train_tuning_policy(std::slice::from_ref(&env), &init, &cfg, seed, parallel)?;
            let ours = rl::evaluate_policy(&env, &out.policy, cfg.eval_episodes)?;
            let random = rl::evaluate_random(&env, cfg.eval_episodes, seed)?;
            Ok((out.curve, ours, random, rl::checkpoint_bytes(&out.policy)))
        })
        .py_err()?;
    let d = PyDict::new(py);
    d.set_item("curve", curve.iter().map(|p| (p.episode, p.mean_reward)).collect::<Vec<_>>())?;
    d.set_item("trained_median", rl::median(&ours))?;
    d.set_item("random_median", rl::median(&random))?;
    d.set_item("trained_rewards", ours)?;
    d.set_item("random_rewards", random)?;
    d.set_item("checkpoint", PyBytes::new(py, &ckpt))?;
    Ok(d)
}

#[pymodule]
fn nars(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("NarsError", py.get_type::<NarsError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("ValidityError", py.get_type::<ValidityError>())?;
    m.add_class::<Medium>()?;
    m.add_class::<HarmonicField>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<FrontEnd>()?;
    m.add_function(wrap_pyfunction!(shock_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fubini_harmonic, m)?)?;
    m.add_function(wrap_pyfunction!(westervelt_plane, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(kzk_axisym, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(angular_error, m)?)?;
    m.add_function(wrap_pyfunction!(si_snr, m)?)?;
    m.add_function(wrap_pyfunction!(snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
