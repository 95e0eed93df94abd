use std::f64::consts::PI;

use super::RoomSpec;
use crate::error::Result;

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Image sources up to `max_order`: `(position, reflection count)`.
fn images(room: &RoomSpec, src: [f64; 3]) -> Vec<([f64; 3], u32)> {
    let n = room.max_order as i64;
    let mut per_axis: [Vec<(f64, u32)>; 3] = Default::default();
    for axis in 0..3 {
        let l = room.dims[axis];
        for k in -n..=n {
            for q in 0..2i64 {
                let order = ((k - q).abs() + k.abs()) as u32;
                if order as i64 <= n {
                    let pos = (1 - 2 * q) as f64 * src[axis] + 2.0 * k as f64 * l;
                    per_axis[axis].push((pos, order));
                }
            }
        }
    }
    let mut out = Vec::new();
    for &(x, ox) in &per_axis[0] {
        for &(y, oy) in &per_axis[1] {
            for &(z, oz) in &per_axis[2] {
                let order = ox + oy + oz;
                if order <= room.max_order {
                    out.push(([x, y, z], order));
                }
            }
        }
    }
    out
}

/// Image-source impulse response from `src` to `mic`.
///
/// Each image adds `reflection^order / (4 pi d)` at delay `d fs / c`, split
/// over the two neighbouring samples by linear interpolation. The split
/// keeps every tap non-negative and nothing lands before the direct path.
/// Length is the latest arrival plus two samples.
pub fn image_source_rir(room: &RoomSpec, src: [f64; 3], mic: [f64; 3]) -> Result<Vec<f64>> {
    room.validate()?;
    room.check_inside(src, "source")?;
    room.check_inside(mic, "microphone")?;
    let imgs: Vec<(f64, f64)> = images(room, src)
        .into_iter()
        .filter_map(|(p, order)| {
            let amp = if order == 0 { 1.0 } else { room.reflection.powi(order as i32) };
            if amp == 0.0 {
                return None;
            }
            let d = dist(p, mic);
            Some((d * room.fs / room.c, amp / (4.0 * PI * d)))
        })
        .collect();
    let last = imgs.iter().map(|i| i.0).fold(0.0, f64::max);
    let mut h = vec![0.0; last.floor() as usize + 2];
    for (delay, amp) in imgs {
        let i = delay.floor() as usize;
        let frac = delay - i as f64;
        h[i] += amp * (1.0 - frac);
        h[i + 1] += amp * frac;
    }
    Ok(h)
}

/// Direct-path delay in samples.
pub fn direct_delay(room: &RoomSpec, src: [f64; 3], mic: [f64; 3]) -> f64 {
    dist(src, mic) * room.fs / room.c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::energy;
    use proptest::prelude::*;

    fn room(reflection: f64, max_order: u32) -> RoomSpec {
        RoomSpec { dims: [6.0, 5.0, 3.0], reflection, max_order, c: 343.0, fs: 16_000.0 }
    }

    #[test]
    fn free_field_peak() {
        let r = room(0.6, 0);
        // 343 / 16000 * 150 = 3.215625 m: integer delay
        let src = [1.0, 1.0, 1.5];
        let mic = [1.0 + 3.215625, 1.0, 1.5];
        let h = image_source_rir(&r, src, mic).unwrap();
        let d = 3.215625;
        let (peak, &v) = h.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(peak, 150);
        assert!((v - 1.0 / (4.0 * PI * d)).abs() <= 0.01 / (4.0 * PI * d));
    }

    #[test]
    fn fractional_delay_keeps_amplitude() {
        let r = room(0.6, 0);
        let src = [1.0, 1.0, 1.5];
        let mic = [3.3, 2.1, 1.2];
        let h = image_source_rir(&r, src, mic).unwrap();
        let d = dist(src, mic);
        let delay = d * r.fs / r.c;
        let (peak, _) = h.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(peak, delay.round() as usize);
        let total: f64 = h.iter().sum();
        assert!((total - 1.0 / (4.0 * PI * d)).abs() <= 0.01 / (4.0 * PI * d));
    }

    #[test]
    fn zero_reflection_matches_order_zero() {
        let src = [2.0, 1.5, 1.0];
        let mic = [4.0, 3.0, 1.4];
        assert_eq!(image_source_rir(&room(0.0, 3), src, mic).unwrap(), image_source_rir(&room(0.6, 0), src, mic).unwrap());
    }

    #[test]
    fn image_count() {
        // 3-D image count up to order N: sum over the octahedral shells.
        let r = room(0.5, 2);
        assert_eq!(images(&r, [1.0, 1.0, 1.0]).len(), 1 + 6 + 18);
    }

    #[test]
    fn outside_positions_rejected() {
        assert!(image_source_rir(&room(0.5, 1), [7.0, 1.0, 1.0], [1.0, 1.0, 1.0]).is_err());
        assert!(image_source_rir(&room(0.5, 1), [1.0, 1.0, 1.0], [1.0, 0.0, 1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn causal_and_energy_monotone(
            sx in 0.2f64..5.8, sy in 0.2f64..4.8, sz in 0.2f64..2.8,
            mx in 0.2f64..5.8, my in 0.2f64..4.8, mz in 0.2f64..2.8,
            refl in 0.0f64..0.99,
        ) {
            let src = [sx, sy, sz];
            let mic = [mx, my, mz];
            prop_assume!(dist(src, mic) > 0.05);
            let mut prev = 0.0;
            for order in 0..4 {
                let r = room(refl, order);
                let h = image_source_rir(&r, src, mic).unwrap();
                let first = direct_delay(&r, src, mic).floor() as usize;
                prop_assert!(h[..first].iter().all(|v| *v == 0.0));
                let e = energy(&h);
                prop_assert!(e >= prev);
                prev = e;
            }
        }
    }
}
