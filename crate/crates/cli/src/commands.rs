use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info};
use nars_core::error::{Error, Result};
use nars_core::frontend::{angular_error, srp_curve_csv, srp_localize, AzimuthGrid, FrontEnd, FrontEndParams};
use nars_core::io::{read_wav_bytes, wav_bytes, ArtifactSet, SampleFormat};
use nars_core::rl::{
    checkpoint_bytes, evaluate_policy, evaluate_random, init_policy, learning_curve_csv, median, train_tuning_policy, TuningEnv,
};
use nars_core::scene::{
    image_source_rir, measure_rtf, metrics_csv, randomized_scenario, render_scene, scene_seed, si_snr, snr_db, Metrics,
    ScenarioConfig, SI_SNR_CAP_DB,
};
use nars_core::wavefield::{harmonic_curve_csv, harmonic_spectrum, march_westervelt_plane, KzkSolver, TimeWaveform};

use crate::config::RunConfig;

/// Artifacts plus `(name, value)` summary lines.
pub struct Outcome {
    pub artifacts: ArtifactSet,
    pub summary: Vec<(String, String)>,
}

impl Outcome {
    fn new() -> Self {
        Self { artifacts: ArtifactSet::new(), summary: Vec::new() }
    }

    fn report(&mut self, name: &str, value: impl std::fmt::Display) {
        self.summary.push((name.to_string(), value.to_string()));
    }
}

fn wav_rate(fs: f64) -> Result<u32> {
    if fs.fract() != 0.0 || fs < 1.0 || fs > u32::MAX as f64 {
        return Err(Error::Data(format!("sample rate {fs} cannot be stored in a WAV header")));
    }
    Ok(fs as u32)
}

pub fn wave(cfg: &RunConfig) -> Result<Outcome> {
    let w = cfg.wave()?;
    let grid = w.grid()?;
    let dt = w.source.frame_duration() / w.n_time as f64;
    let mut rows = Vec::with_capacity(w.n_steps + 1);
    let mut source = Vec::new();
    let mut failure = None;
    let end = march_westervelt_plane(&w.medium, &w.source, &grid, |z, p| {
        if failure.is_some() {
            return;
        }
        if source.is_empty() {
            source = p.to_vec();
        }
        match TimeWaveform::new(p.to_vec(), dt).and_then(|tw| harmonic_spectrum(&tw, w.source.f0, w.n_harmonics)) {
            Ok(b) => rows.push((z, b.iter().map(|v| v / w.source.p0).collect::<Vec<f64>>())),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut out = Outcome::new();
    out.artifacts.add("harmonics.csv", harmonic_curve_csv(&rows));
    let mut wf = String::from("t,p_source,p_end\n");
    for (i, (a, b)) in source.iter().zip(&end.samples).enumerate() {
        let _ = writeln!(wf, "{:.9e},{a:.9e},{b:.9e}", i as f64 * dt);
    }
    out.artifacts.add("waveform.csv", wf);
    let last = &rows.last().expect("at least the source plane").1;
    for (i, b) in last.iter().enumerate() {
        out.report(&format!("B{}", i + 1), format!("{b:.6e}"));
    }
    Ok(out)
}

pub fn kzk(cfg: &RunConfig) -> Result<Outcome> {
    let k = cfg.kzk()?;
    let mut solver = KzkSolver::new(&k.medium, &k.source, &k.profile, &k.grid)?;
    let mut out = Outcome::new();
    let mut rows = Vec::with_capacity(k.grid.n_z + 1);
    let mut step = 0usize;
    let p0 = k.source.p0;
    let n_harm = k.grid.n_harm;
    let mut dumps = Vec::new();
    solver.run(|f| {
        rows.push((f.z, (1..=n_harm).map(|n| f.on_axis(n) / p0).collect::<Vec<f64>>()));
        if k.dump_every > 0 && step.is_multiple_of(k.dump_every) {
            dumps.push((format!("field_{step:05}.bin"), f.to_dump_bytes()));
        }
        step += 1;
    })?;
    debug!("kzk: {} planes", rows.len());
    for (name, bytes) in dumps {
        out.artifacts.add(name, bytes);
    }
    out.artifacts.add("field_final.bin", solver.field().to_dump_bytes());
    out.artifacts.add("axis.csv", harmonic_curve_csv(&rows));
    let (z, last) = rows.last().expect("source plane observed");
    out.report("z_end_m", format!("{z:.6e}"));
    for (i, b) in last.iter().enumerate() {
        out.report(&format!("axis_B{}", i + 1), format!("{b:.6e}"));
    }
    Ok(out)
}

pub fn scene(cfg: &RunConfig) -> Result<Outcome> {
    let sc = cfg.scenario(crate::Command::Scene)?;
    let s = render_scene(sc)?;
    let fs = wav_rate(sc.room.fs)?;
    let mut out = Outcome::new();
    out.artifacts.add("mics.wav", wav_bytes(&s.mics, fs, SampleFormat::Float32)?);
    out.artifacts.add("target.wav", wav_bytes(&s.target, fs, SampleFormat::Float32)?);
    out.artifacts.add("dry.wav", wav_bytes(std::slice::from_ref(&s.dry), fs, SampleFormat::Float32)?);
    if let Some(far) = &s.far {
        out.artifacts.add("far.wav", wav_bytes(std::slice::from_ref(far), fs, SampleFormat::Float32)?);
    }
    let rirs: Vec<Vec<f64>> = sc.mic_positions.iter().map(|m| image_source_rir(&sc.room, sc.source_pos, *m)).collect::<Result<_>>()?;
    let longest = rirs.iter().map(Vec::len).max().unwrap_or(0);
    let rirs: Vec<Vec<f64>> = rirs
        .into_iter()
        .map(|mut h| {
            h.resize(longest, 0.0);
            h
        })
        .collect();
    out.artifacts.add("rir.wav", wav_bytes(&rirs, fs, SampleFormat::Float32)?);
    out.report("input_snr_db", format!("{:.3}", snr_db(&s.target[0], &s.noise[0])));
    out.report("true_azimuth_deg", format!("{:.3}", sc.true_azimuth()?));
    Ok(out)
}

/// Streams `mics` through `fe` in `chunk`-sample calls from a fresh state.
/// Returns the latency-aligned output (input length) and the processing time.
pub fn stream(fe: &mut FrontEnd, params: &FrontEndParams, mics: &[Vec<f64>], far: Option<&[f64]>, chunk: usize) -> Result<(Vec<f64>, f64)> {
    fe.reset();
    let len = mics.first().map_or(0, Vec::len);
    let d = fe.latency();
    let padded = (len + d).div_ceil(chunk) * chunk;
    let pad = |x: &[f64]| {
        let mut v = x.to_vec();
        v.resize(padded, 0.0);
        v
    };
    let mics: Vec<Vec<f64>> = mics.iter().map(|m| pad(m)).collect();
    let far = far.map(pad);
    let mut y = Vec::with_capacity(padded);
    let start = Instant::now();
    for at in (0..padded).step_by(chunk) {
        let part: Vec<Vec<f64>> = mics.iter().map(|m| m[at..at + chunk].to_vec()).collect();
        y.extend(fe.process_chunk(params, &part, far.as_ref().map(|f| &f[at..at + chunk]))?);
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok((y[d..d + len].to_vec(), elapsed))
}

fn guarded_si_snr(reference: &[f64], estimate: &[f64]) -> f64 {
    if reference.iter().all(|v| *v == 0.0) || estimate.iter().all(|v| *v == 0.0) {
        -SI_SNR_CAP_DB
    } else {
        si_snr(reference, estimate).unwrap_or(-SI_SNR_CAP_DB)
    }
}

/// Samples per ERLE block.
const ERLE_BLOCK: usize = 1024;

pub fn frontend(cfg: &RunConfig) -> Result<Outcome> {
    let cmd = crate::Command::Frontend;
    let sc = cfg.scenario(cmd)?;
    let section = cfg.frontend(cmd)?;
    let (mut fe, params) = section.build(sc)?;
    let s = render_scene(sc)?;
    let fs = wav_rate(sc.room.fs)?;

    let (y, elapsed) = stream(&mut fe, &params, &s.mics, s.far.as_deref(), section.chunk)?;
    // the clean reference is the target alone through the same chain
    let (reference, _) = stream(&mut fe, &params, &s.target, None, section.chunk)?;
    let si_out = guarded_si_snr(&reference, &y);
    let si_in = guarded_si_snr(&s.target[0], &s.mics[0]);
    let loc = srp_localize(fe.geometry(), &s.mics, &AzimuthGrid::new(360)?)?;
    let metrics = Metrics {
        si_snr_db: si_out,
        snr_gain_db: si_out - si_in,
        rtf: measure_rtf(elapsed, sc.duration)?,
        doa_err_deg: angular_error(loc.azimuth_deg, sc.true_azimuth()?),
    };
    let mut out = Outcome::new();
    out.artifacts.add("output.wav", wav_bytes(std::slice::from_ref(&y), fs, SampleFormat::Float32)?);
    out.artifacts.add("metrics.csv", metrics_csv(&[("0".to_string(), metrics)]));
    out.report("si_snr_db", format!("{:.3}", metrics.si_snr_db));
    out.report("snr_gain_db", format!("{:.3}", metrics.snr_gain_db));
    out.report("rtf", format!("{:.4}", metrics.rtf));
    out.report("doa_err_deg", format!("{:.3}", metrics.doa_err_deg));

    if let (Some(echo), Some(far)) = (&s.echo, &s.far) {
        // echo-only pass: the canceller at the configured step size against a frozen one
        let frozen = FrontEndParams { mu: 0.0, ..params.clone() };
        let (residual, _) = stream(&mut fe, &params, echo, Some(far), section.chunk)?;
        let (raw, _) = stream(&mut fe, &frozen, echo, Some(far), section.chunk)?;
        let mut csv = String::from("frame,erle_db\n");
        let mut late = Vec::new();
        for (i, (r, e)) in raw.chunks_exact(ERLE_BLOCK).zip(residual.chunks_exact(ERLE_BLOCK)).enumerate() {
            let pr: f64 = r.iter().map(|v| v * v).sum();
            let pe: f64 = e.iter().map(|v| v * v).sum();
            let db = if pr > 0.0 && pe > 0.0 { 10.0 * (pr / pe).log10() } else { 0.0 };
            let _ = writeln!(csv, "{i},{db:.6}");
            late.push(db);
        }
        out.artifacts.add("erle.csv", csv);
        let tail = &late[late.len() / 2..];
        if !tail.is_empty() {
            out.report("erle_db_second_half", format!("{:.3}", tail.iter().sum::<f64>() / tail.len() as f64));
        }
    }
    Ok(out)
}

fn localize_one(sc: &ScenarioConfig, grid: &AzimuthGrid) -> Result<(f64, f64, nars_core::frontend::Localization)> {
    let s = render_scene(sc)?;
    let loc = srp_localize(&sc.geometry()?, &s.mics, grid)?;
    let truth = sc.true_azimuth()?;
    Ok((truth, loc.azimuth_deg, loc))
}

pub fn localize(cfg: &RunConfig, parallel: usize) -> Result<Outcome> {
    let sc = cfg.scenario(crate::Command::Localize)?;
    let section = cfg.localize();
    let grid = AzimuthGrid::new(section.grid_points)?;
    let (truth, est, loc) = localize_one(sc, &grid)?;
    let mut out = Outcome::new();
    out.artifacts.add("srp.csv", srp_curve_csv(&loc));
    out.report("azimuth_deg", format!("{est:.3}"));
    out.report("doa_err_deg", format!("{:.3}", angular_error(est, truth)));
    if section.random_scenes > 0 {
        // layouts come from the run seed; each keeps the scenario's room, array shape and noise
        let base = ScenarioConfig { seed: cfg.seed, ..sc.clone() };
        let layouts: Vec<ScenarioConfig> =
            (0..section.random_scenes as u64).map(|i| randomized_scenario(&base, i)).collect::<Result<_>>()?;
        let run = |c: &ScenarioConfig| localize_one(c, &grid).map(|(t, e, _)| (t, e));
        let results: Vec<(f64, f64)> = if parallel <= 1 {
            layouts.iter().map(run).collect::<Result<_>>()?
        } else {
            let per = layouts.len().div_ceil(parallel);
            std::thread::scope(|s| {
                let handles: Vec<_> = layouts.chunks(per).map(|g| s.spawn(move || g.iter().map(run).collect::<Vec<_>>())).collect();
                handles.into_iter().flat_map(|h| h.join().expect("localize worker panicked")).collect::<Result<_>>()
            })?
        };
        let mut csv = String::from("scene,true_deg,estimate_deg,error_deg\n");
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        for (i, (t, e)) in results.iter().enumerate() {
            let err = angular_error(*e, *t);
            total += err;
            worst = worst.max(err);
            let _ = writeln!(csv, "{i},{t:.6},{e:.6},{err:.6}");
        }
        out.artifacts.add("localize.csv", csv);
        out.report("mean_doa_err_deg", format!("{:.3}", total / results.len() as f64));
        out.report("max_doa_err_deg", format!("{worst:.3}"));
    }
    Ok(out)
}

pub fn train(cfg: &RunConfig, parallel: usize) -> Result<Outcome> {
    let sc = cfg.scenario(crate::Command::Train)?;
    let rl = cfg.rl()?;
    let env = TuningEnv::new(sc, &rl.env)?;
    let policy = init_policy(rl, cfg.seed)?;
    info!("training for {} steps", rl.budget);
    let trained = train_tuning_policy(std::slice::from_ref(&env), &policy, rl, cfg.seed, parallel)?;
    let ours = evaluate_policy(&env, &trained.policy, rl.eval_episodes)?;
    let random = evaluate_random(&env, rl.eval_episodes, cfg.seed)?;
    let mut eval = String::from("episode,trained_reward,random_reward\n");
    for (i, (a, b)) in ours.iter().zip(&random).enumerate() {
        let _ = writeln!(eval, "{i},{a:.9e},{b:.9e}");
    }
    let (m_ours, m_random) = (median(&ours), median(&random));
    let mut out = Outcome::new();
    out.artifacts.add("learning_curve.csv", learning_curve_csv(&trained.curve));
    out.artifacts.add("policy.bin", checkpoint_bytes(&trained.policy));
    out.artifacts.add("eval.csv", eval);
    out.report("trained_median_reward", format!("{m_ours:.6}"));
    out.report("random_median_reward", format!("{m_random:.6}"));
    out.report("reward_ratio", format!("{:.4}", m_ours / m_random));
    Ok(out)
}

/// Benchmark buckets by clip length, seconds: `(label, upper bound)`; the
/// last bucket is open.
pub const BUCKETS: [(&str, f64); 5] =
    [("≤5 s", 5.0), ("5–10 s", 10.0), ("10–20 s", 20.0), ("20–30 s", 30.0), ("≥30 s", f64::INFINITY)];

pub fn bucket_of(seconds: f64) -> usize {
    if seconds >= 30.0 {
        return 4;
    }
    BUCKETS.iter().position(|(_, hi)| seconds <= *hi).expect("last bucket is open")
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank - 1]
}

/// `bucket,mean_rtf,p95_rtf` for the non-empty buckets of `(seconds, rtf)` samples.
pub fn bench_csv(samples: &[(f64, f64)]) -> String {
    let mut per: Vec<Vec<f64>> = vec![Vec::new(); BUCKETS.len()];
    for (secs, rtf) in samples {
        per[bucket_of(*secs)].push(*rtf);
    }
    let mut csv = String::from("bucket,mean_rtf,p95_rtf\n");
    for (b, v) in per.iter().enumerate() {
        if v.is_empty() {
            continue;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let _ = writeln!(csv, "{},{mean:.6},{:.6}", BUCKETS[b].0, percentile(v, 0.95));
    }
    csv
}

pub fn bench(cfg: &RunConfig) -> Result<Outcome> {
    let cmd = crate::Command::Bench;
    let template = cfg.scenario(cmd)?;
    let section = cfg.frontend(cmd)?;
    let b = cfg.bench()?;
    if b.durations.is_empty() {
        return Err(Error::Data("benchmark corpus is empty".into()));
    }
    let fs = wav_rate(template.room.fs)?;
    let mut out = Outcome::new();

    // corpus first, so the timed runs read decoded files like any other input
    let mut corpus = Vec::with_capacity(b.durations.len());
    for (i, &secs) in b.durations.iter().enumerate() {
        let clip = ScenarioConfig { duration: secs, seed: scene_seed(cfg.seed, i as u64), ..template.clone() };
        let s = render_scene(&clip)?;
        let mics_name = format!("corpus_{i:02}.wav");
        out.artifacts.add(&mics_name, wav_bytes(&s.mics, fs, SampleFormat::Float32)?);
        let far_name = s.far.as_ref().map(|far| -> Result<String> {
            let name = format!("corpus_{i:02}_far.wav");
            out.artifacts.add(&name, wav_bytes(std::slice::from_ref(far), fs, SampleFormat::Float32)?);
            Ok(name)
        });
        corpus.push((mics_name, far_name.transpose()?));
    }

    let (mut fe, params) = section.build(template)?;
    let mut samples = Vec::new();
    for (name, far_name) in &corpus {
        let (mics, rate) = read_wav_bytes(out.artifacts.get(name).expect("just added"))?;
        let far = match far_name {
            Some(n) => Some(read_wav_bytes(out.artifacts.get(n).expect("just added"))?.0.remove(0)),
            None => None,
        };
        if mics.len() != fe.geometry().n_mics() || rate != fs {
            return Err(Error::Data(format!("{name}: {} channels at {rate} Hz do not match the array", mics.len())));
        }
        let secs = mics[0].len() as f64 / rate as f64;
        for _ in 0..b.repeats {
            let (_, elapsed) = stream(&mut fe, &params, &mics, far.as_deref(), section.chunk)?;
            let rtf = measure_rtf(elapsed, secs)?;
            debug!("{name}: {secs:.1} s audio, rtf {rtf:.4}");
            samples.push((secs, rtf));
        }
    }
    let csv = bench_csv(&samples);
    for line in csv.lines().skip(1) {
        let mut f = line.split(',');
        let (label, mean, p95) = (f.next().unwrap_or(""), f.next().unwrap_or(""), f.next().unwrap_or(""));
        out.report(&format!("rtf[{label}]"), format!("mean {mean} p95 {p95}"));
    }
    out.artifacts.add("bench.csv", csv);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_of(0.5), 0);
        assert_eq!(bucket_of(5.0), 0);
        assert_eq!(bucket_of(5.01), 1);
        assert_eq!(bucket_of(10.0), 1);
        assert_eq!(bucket_of(20.0), 2);
        assert_eq!(bucket_of(29.9), 3);
        assert_eq!(bucket_of(30.0), 4);
        assert_eq!(bucket_of(600.0), 4);
    }

    #[test]
    fn ten_seconds_in_half_a_second() {
        let rtf = measure_rtf(0.5, 10.0).unwrap();
        assert_eq!(bench_csv(&[(10.0, rtf)]), "bucket,mean_rtf,p95_rtf\n5–10 s,0.050000,0.050000\n");
    }

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&v, 1.0), 20.0);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
    }
}
