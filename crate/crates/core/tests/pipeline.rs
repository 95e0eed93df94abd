use nars_core::frontend::{angular_error, srp_localize, AzimuthGrid, FilterBankSpec, FrontEnd, FrontEndParams};
use nars_core::rl::mistuned_scenario;
use nars_core::scene::{render_scene, snr_db, ScenarioConfig};

fn quiet_room() -> ScenarioConfig {
    let (mut s, _) = mistuned_scenario();
    s.room.reflection = 0.0;
    s.room.max_order = 0;
    s.echo = None;
    s
}

fn front_end(s: &ScenarioConfig) -> FrontEnd {
    let spec = FilterBankSpec::design(32, 8, 8, s.room.fs).unwrap();
    FrontEnd::new(spec, s.geometry().unwrap(), 16, 1e-6).unwrap()
}

#[test]
fn rendered_scene_localizes_to_the_talker() {
    let s = quiet_room();
    let r = render_scene(&s).unwrap();
    let loc = srp_localize(&s.geometry().unwrap(), &r.mics, &AzimuthGrid::new(360).unwrap()).unwrap();
    assert!(angular_error(loc.azimuth_deg, s.true_azimuth().unwrap()) < 2.0, "{}", loc.azimuth_deg);
}

#[test]
fn beam_on_talker_raises_snr() {
    let s = quiet_room();
    let r = render_scene(&s).unwrap();
    let mut fe = front_end(&s);
    let run = |fe: &mut FrontEnd, steer: f64, x: &[Vec<f64>]| {
        let p = FrontEndParams::unity(fe.spec(), 0.0, steer);
        fe.process_aligned(&p, x, None).unwrap()
    };
    let az = s.true_azimuth().unwrap();
    let input = snr_db(&r.target[0], &r.noise[0]);
    let on = snr_db(&run(&mut fe, az, &r.target), &run(&mut fe, az, &r.noise));
    let off = snr_db(&run(&mut fe, az + 180.0, &r.target), &run(&mut fe, az + 180.0, &r.noise));
    assert!(on - input > 3.0, "gain {}", on - input);
    assert!(on > off);
}

#[test]
fn front_end_is_linear_without_adaptation() {
    let s = quiet_room();
    let r = render_scene(&s).unwrap();
    let mut fe = front_end(&s);
    let p = FrontEndParams::unity(fe.spec(), 0.0, 30.0);
    let sum = fe.process_aligned(&p, &r.mics, None).unwrap();
    let a = fe.process_aligned(&p, &r.target, None).unwrap();
    let b = fe.process_aligned(&p, &r.noise, None).unwrap();
    let peak = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..sum.len() {
        assert!((sum[i] - a[i] - b[i]).abs() <= 1e-9 * peak);
    }
}

#[test]
fn chunked_and_whole_streams_agree() {
    let s = quiet_room();
    let r = render_scene(&s).unwrap();
    let mut fe = front_end(&s);
    let p = FrontEndParams::unity(fe.spec(), 0.1, 45.0);
    let n = r.mics[0].len() / 256 * 256;
    let mics: Vec<Vec<f64>> = r.mics.iter().map(|m| m[..n].to_vec()).collect();
    fe.reset();
    let whole = fe.process_chunk(&p, &mics, None).unwrap();
    fe.reset();
    let mut pieces = Vec::new();
    for k in 0..n / 256 {
        let chunk: Vec<Vec<f64>> = mics.iter().map(|m| m[k * 256..(k + 1) * 256].to_vec()).collect();
        pieces.extend(fe.process_chunk(&p, &chunk, None).unwrap());
    }
    assert_eq!(whole, pieces);
}
