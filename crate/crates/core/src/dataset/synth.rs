use super::records::RawRecord;
use crate::rng::RngStream;

/// Heart-disease-like records with the real schema and a learnable but noisy
/// signal. About one in twelve positives has the cholesterol sentinel zero,
/// and a handful of rows are exact duplicates.
pub fn synthetic_heart(n: usize, seed: u64) -> Vec<RawRecord> {
    let mut rng = RngStream::new(seed, 0x4EA7);
    let mut out: Vec<RawRecord> = Vec::with_capacity(n);
    while out.len() < n {
        if out.len() > 10 && rng.uniform01() < 0.02 {
            let j = rng.below(out.len());
            out.push(out[j].clone());
            continue;
        }
        let y = u8::from(rng.uniform01() < 0.55);
        let yf = f64::from(y);
        // shared latent severity blurs the class boundary
        let s = rng.normal(0.0, 1.0) + 0.8 * (yf - 0.5);
        let pick = |rng: &mut RngStream, p: &[f64]| -> u8 {
            let mut u = rng.uniform01() * p.iter().sum::<f64>();
            for (i, w) in p.iter().enumerate() {
                if u < *w {
                    return i as u8;
                }
                u -= w;
            }
            (p.len() - 1) as u8
        };
        let chest = if y == 1 {
            pick(&mut rng, &[0.75, 0.05, 0.14, 0.06])
        } else {
            pick(&mut rng, &[0.25, 0.35, 0.32, 0.08])
        };
        let slope = if y == 1 {
            pick(&mut rng, &[0.1, 0.72, 0.18])
        } else {
            pick(&mut rng, &[0.04, 0.2, 0.76])
        };
        let chol = if y == 1 && rng.uniform01() < 0.08 {
            0.0
        } else {
            rng.normal(245.0 - 12.0 * yf, 50.0).clamp(100.0, 560.0).round()
        };
        out.push(RawRecord {
            age: Some(rng.normal(50.0 + 5.0 * yf + 3.0 * s, 8.5).clamp(28.0, 77.0).round()),
            sex: Some(u8::from(rng.uniform01() < 0.35 - 0.2 * yf)),
            chest_pain_type: Some(chest),
            resting_bp: Some(rng.normal(130.0 + 3.0 * yf, 17.0).clamp(80.0, 200.0).round()),
            cholesterol: Some(chol),
            fasting_bs: Some(u8::from(rng.uniform01() < 0.1 + 0.24 * yf)),
            resting_ecg: Some(pick(&mut rng, &[0.6, 0.18 + 0.05 * yf, 0.2])),
            max_hr: Some(rng.normal(148.0 - 20.0 * yf - 6.0 * s, 22.0).clamp(60.0, 202.0).round()),
            exercise_angina: Some(u8::from(rng.uniform01() < 0.13 + 0.5 * yf)),
            oldpeak: Some((rng.normal(0.4 + 0.9 * yf + 0.3 * s, 0.9).max(0.0) * 10.0).round() / 10.0),
            st_slope: Some(slope),
            heart_disease: y,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let a = synthetic_heart(400, 9);
        assert_eq!(a, synthetic_heart(400, 9));
        assert_ne!(a, synthetic_heart(400, 10));
        assert!(a.iter().all(|r| r.max_hr.is_some_and(|h| (60.0..=202.0).contains(&h))));
        let pos = a.iter().filter(|r| r.heart_disease == 1).count();
        assert!(pos > 150 && pos < 290);
    }
}
