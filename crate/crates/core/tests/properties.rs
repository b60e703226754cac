use gesture_core::csmp::{chunk_windows, contrastive_loss};
use gesture_core::diffusion::{FeatureStats, NoiseSchedule, ScheduleKind};
use gesture_core::motion::rotation::{exp_map, from_euler, frobenius_distance, log_map, Axis};
use gesture_core::nn::Tensor;
use gesture_core::signal::{mute_gain, remove_dc, resample_polyphase, AudioTrack, RampShape, SpeechIntervals};
use proptest::prelude::*;

fn mean_live(x: &[f64]) -> f64 {
    let live: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
    live.iter().sum::<f64>() / live.len().max(1) as f64
}

/// Samples with runs of exact zeros, like a channel that was muted in places.
fn audio_with_gaps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((any::<bool>(), -1.0f64..1.0, 1usize..40), 1..30).prop_map(|runs| {
        runs.into_iter()
            .flat_map(|(zero, v, n)| std::iter::repeat_n(if zero { 0.0 } else { v + 0.05 }, n))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn windows_cover_every_frame(frames in 500usize..20_000) {
        let ws = chunk_windows(frames, 500, 250);
        let mut covered = vec![false; frames];
        for w in &ws {
            prop_assert_eq!(w.len, 500);
            prop_assert!(w.start + w.len <= frames);
            covered[w.start..w.start + w.len].iter_mut().for_each(|c| *c = true);
        }
        prop_assert!(covered.iter().all(|c| *c));
        prop_assert_eq!(ws.last().unwrap().start + 500, frames);
    }

    #[test]
    fn expmap_round_trip(x in -3.0f64..3.0, y in -1.5f64..1.5, z in -3.0f64..3.0) {
        let r = from_euler([Axis::Z, Axis::X, Axis::Y], [x, y, z]);
        let back = exp_map(log_map(&r));
        prop_assert!(frobenius_distance(&r, &back) < 1e-6);
    }
}

proptest! {
    #[test]
    fn dc_removal_is_idempotent_and_zero_mean(samples in audio_with_gaps()) {
        let a = AudioTrack::new(16_000, samples).unwrap();
        let once = remove_dc(&a, 0.0);
        let twice = remove_dc(&once, 0.0);
        prop_assert!(mean_live(&once.samples).abs() < 1e-12);
        for (p, q) in once.samples.iter().zip(&twice.samples) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        for (p, q) in a.samples.iter().zip(&once.samples) {
            if *p == 0.0 {
                prop_assert_eq!(*q, 0.0);
            }
        }
    }

    #[test]
    fn mute_gain_is_bounded_and_continuous(
        start in 0.0f64..3.0,
        len in 0.05f64..2.0,
        t in 0.0f64..6.0,
    ) {
        let speech = SpeechIntervals::new(vec![(start, start + len)]).unwrap();
        let g = |t| mute_gain(&speech, 0.2, RampShape::Linear, t);
        prop_assert!((0.0..=1.0).contains(&g(t)));
        // slope of a 200 ms linear ramp is 5 per second
        let h = 1e-4;
        prop_assert!((g(t + h) - g(t)).abs() <= 5.0 * h + 1e-12);
    }

    #[test]
    fn resampled_length(len in 1usize..2000) {
        let x = vec![0.5; len];
        let y = resample_polyphase(&x, 50, 30).unwrap();
        prop_assert_eq!(y.len(), (len * 3).div_ceil(5));
    }

    #[test]
    fn loss_is_symmetric(seed in 0u64..1000, b in 1usize..6) {
        let mut rng = gesture_core::rng::Rng::new(seed);
        let unit = |rng: &mut gesture_core::rng::Rng| {
            let mut data = rng.normal_vec(b * 4);
            for row in data.chunks_mut(4) {
                let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.iter_mut().for_each(|v| *v /= n);
            }
            Tensor::matrix(b, 4, data).unwrap()
        };
        let (u, v) = (unit(&mut rng), unit(&mut rng));
        let a = contrastive_loss(&u, &v, 0.07).unwrap();
        let c = contrastive_loss(&v, &u, 0.07).unwrap();
        prop_assert_eq!(a, c);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn feature_stats_invert(data in prop::collection::vec(-50.0f64..50.0, 3..60)) {
        let rows = data.len() / 3;
        let data = &data[..rows * 3];
        let s = FeatureStats::fit(&[data], 3).unwrap();
        let back = s.denormalize(&s.normalize(data));
        for (a, b) in back.iter().zip(data) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn alpha_bar_decreases(steps in 2usize..300, b1 in 1e-5f64..1e-2, span in 0.0f64..0.2) {
        let s = NoiseSchedule::new(ScheduleKind::Linear, steps, b1, b1 + span).unwrap();
        prop_assert_eq!(s.beta(1), b1);
        prop_assert_eq!(s.beta(steps), b1 + span);
        for n in 1..=steps {
            prop_assert!(s.alpha_bar(n) < s.alpha_bar(n - 1));
        }
    }
}
