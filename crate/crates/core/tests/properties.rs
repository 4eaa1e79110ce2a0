use hdrfeat::cli::RunConfig;
use hdrfeat::imageio::{ppm, rgbe, HdrImage};
use hdrfeat::model::AttentionMode;
use hdrfeat::tensor::{Graph, Tensor};
use hdrfeat::train::augment::Dihedral;
use hdrfeat::train::{mu_law, psnr, Domain};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concat_then_slice_recovers_parts(
        channels in prop::collection::vec(1usize..5, 1..5),
        h in 1usize..5,
        w in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut g = Graph::<f64>::new();
        let mut parts = Vec::new();
        for (i, &c) in channels.iter().enumerate() {
            let n = 2 * c * h * w;
            let data: Vec<f64> = (0..n).map(|k| ((seed ^ (i * 977 + k) as u64) % 1000) as f64 / 7.0).collect();
            parts.push(g.constant(Tensor::from_f64(&[2, c, h, w], &data).unwrap()));
        }
        let cat = g.concat(&parts).unwrap();
        let mut start = 0;
        for (&p, &c) in parts.iter().zip(&channels) {
            let s = g.slice_channels(cat, start, c).unwrap();
            prop_assert_eq!(g.value(s).data(), g.value(p).data());
            start += c;
        }
    }

    #[test]
    fn sigmoid_is_open_unit(x in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let mut g = Graph::<f64>::new();
        let v = g.constant(Tensor::from_f64(&[1], &[x]).unwrap());
        let s = g.sigmoid(v).unwrap();
        let y = g.value(s).data()[0];
        prop_assert!(y > 0.0 && y < 1.0);
        let mut g = Graph::<f32>::new();
        let v = g.constant(Tensor::from_f64(&[1], &[x]).unwrap());
        let s = g.sigmoid(v).unwrap();
        let y = g.value(s).data()[0];
        prop_assert!(y > 0.0 && y < 1.0);
    }

    #[test]
    fn rgbe_round_trip_within_shared_exponent_range(
        exp in -30.0f64..30.0,
        ratios in prop::array::uniform3(0.5f64..=1.0),
    ) {
        let px = ratios.map(|r| (exp.exp2() * r) as f32);
        let bytes = rgbe::encode_pixel(px);
        let back = rgbe::decode_pixel(bytes);
        for (a, b) in px.iter().zip(back) {
            prop_assert!(((a - b) / a).abs() < 0.01, "{:?} -> {:?}", px, back);
        }
        prop_assert_eq!(rgbe::encode_pixel(back), bytes);
    }

    #[test]
    fn mu_law_is_monotone_on_unit(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (ta, tb) = (mu_law(a, 5000.0), mu_law(b, 5000.0));
        prop_assert!((0.0..=1.0).contains(&ta));
        prop_assert_eq!(a < b, ta < tb);
    }

    #[test]
    fn psnr_is_symmetric(a in prop::collection::vec(0.0f32..1.0, 12), b in prop::collection::vec(0.0f32..1.0, 12)) {
        let (ia, ib) = (HdrImage::new(2, 2, a).unwrap(), HdrImage::new(2, 2, b).unwrap());
        for d in [Domain::Linear, Domain::ToneMapped { mu: 5000.0 }] {
            prop_assert_eq!(psnr(&ia, &ib, d).unwrap(), psnr(&ib, &ia, d).unwrap());
        }
    }

    #[test]
    fn ppm_round_trip(w in 1usize..6, h in 1usize..6, sixteen in any::<bool>(), seed in any::<u16>()) {
        let depth = if sixteen { 16 } else { 8 };
        let max: u32 = if sixteen { 65535 } else { 255 };
        let codes: Vec<u16> = (0..w * h * 3).map(|i| ((seed as u32 * 31 + i as u32 * 7919) % (max + 1)) as u16).collect();
        let bytes = ppm::encode(w, h, depth, &codes).unwrap();
        prop_assert_eq!(ppm::decode(&bytes).unwrap(), (w, h, depth, codes));
    }

    #[test]
    fn dihedral_sources_are_bijections(w in 1usize..6, h in 1usize..6) {
        for t in Dihedral::ALL {
            let (ow, oh) = t.output_size(w, h);
            let mut seen = vec![false; w * h];
            for y in 0..oh {
                for x in 0..ow {
                    let (sx, sy) = t.source(x, y, w, h);
                    prop_assert!(sx < w && sy < h);
                    prop_assert!(!seen[sy * w + sx]);
                    seen[sy * w + sx] = true;
                }
            }
        }
    }

    #[test]
    fn run_config_text_round_trips(
        depth in 1usize..=3,
        mode in 0usize..3,
        epochs in 1usize..100_000,
        lr in 1e-6f64..1e-2,
        seed in any::<u32>(),
        augment in any::<bool>(),
    ) {
        let cfg = RunConfig {
            depth,
            attention: [AttentionMode::None, AttentionMode::Sequential, AttentionMode::Parallel][mode],
            epochs,
            lr_switch_epoch: epochs / 2,
            lr_initial: lr,
            seed: seed as u64,
            augment,
            checkpoint: Some("w.ckpt".into()),
            ..RunConfig::default()
        };
        prop_assert_eq!(RunConfig::resolve(Some(&cfg.to_text()), &[], None).unwrap(), cfg);
    }
}
