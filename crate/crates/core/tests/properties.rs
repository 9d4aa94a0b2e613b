mod common;

use common::*;
use gestureprint::cloud::{chamfer, hausdorff, jsd, normalize_center, resample_fixed, FrameStream, GestureCloud, Point};
use gestureprint::evaluator::{auc, classification_metrics, eer, ScoreSet};
use gestureprint::io::{parse_stream, render_stream};
use gestureprint::preprocess::{dbscan_cluster, keep_main_cluster, DenoiseConfig};
use gestureprint::segmenter::{segment_stream, SegmenterConfig};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point<f64>> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64, 0.0..2.0f64).prop_map(|(x, y, z, d, i)| Point::new(x, y, z, d, i))
}

fn cloud(max: usize) -> impl Strategy<Value = GestureCloud<f64>> {
    prop::collection::vec(point(), 1..=max).prop_map(GestureCloud::new)
}

/// Points on a coarse lattice so that exact distance ties and duplicates occur.
fn lattice_cloud(max: usize) -> impl Strategy<Value = GestureCloud<f64>> {
    prop::collection::vec((0..6i32, 0..6i32, 0..3i32), 1..=max).prop_map(|v| {
        GestureCloud::new(v.into_iter().map(|(x, y, z)| Point::at(x as f64 * 0.25, y as f64 * 0.25, z as f64 * 0.25)).collect())
    })
}

fn scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    // a coarse grid mixed in to force ties
    prop::collection::vec(prop_oneof![0.0..1.0f64, (0..5u8).prop_map(|k| k as f64 / 4.0)], 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metrics_match_brute_force(a in cloud(48), b in cloud(48), voxel in 0.05..1.0f64) {
        prop_assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff_oracle(&a, &b));
        prop_assert_eq!(chamfer(&a, &b).unwrap(), chamfer_oracle(&a, &b));
        let j = jsd(&a, &b, voxel).unwrap();
        prop_assert!((j - jsd_oracle(&a, &b, voxel)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&j));
    }

    #[test]
    fn metrics_symmetric_and_zero_on_self(a in cloud(32), b in cloud(32)) {
        prop_assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
        prop_assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
        prop_assert!(chamfer(&a, &b).unwrap() <= hausdorff(&a, &b).unwrap());
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(jsd(&a, &a, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn dbscan_matches_reachability(c in lattice_cloud(60), d_max in 0.1..0.8f64, n_min in 1usize..7) {
        let cfg = DenoiseConfig { d_max, n_min };
        let got = dbscan_cluster(&c, &cfg).unwrap();
        if let Err(e) = check_dbscan(&c, &cfg, &got) {
            prop_assert!(false, "{}", e);
        }
        match keep_main_cluster(&c, &cfg) {
            Ok(main) => prop_assert_eq!(main.len(), *got.cluster_sizes.iter().max().unwrap()),
            Err(_) => prop_assert!(got.cluster_sizes.iter().all(|&s| s < n_min)),
        }
    }

    #[test]
    fn centering_and_resampling(c in cloud(64), p in 1usize..100, seed in any::<u64>()) {
        let centered = normalize_center(&c).unwrap();
        let m = centered.centroid().unwrap();
        prop_assert!(m.iter().all(|v| v.abs() < 1e-9));
        let r = resample_fixed(&c, p, seed).unwrap();
        prop_assert_eq!(r.len(), p);
        prop_assert!(r.points.iter().all(|q| c.points.contains(q)));
        prop_assert_eq!(&r, &resample_fixed(&c, p, seed).unwrap());
    }

    #[test]
    fn eer_matches_exhaustive_sweep(g in scores(40), i in scores(40)) {
        let (e, t) = eer(&ScoreSet { genuine: g.clone(), impostor: i.clone() }).unwrap();
        let (eo, to) = eer_oracle(&g, &i);
        prop_assert!((e - eo).abs() <= 1e-12, "{} vs {}", e, eo);
        prop_assert!((t - to).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn eer_symmetric_under_pool_swap(g in scores(40), i in scores(40)) {
        // genuine and impostor exchanged, scores mirrored through 0.5
        let (e, _) = eer(&ScoreSet { genuine: g.clone(), impostor: i.clone() }).unwrap();
        let (m, _) = eer(&ScoreSet { genuine: i.iter().map(|v| 1.0 - v).collect(), impostor: g.iter().map(|v| 1.0 - v).collect() }).unwrap();
        prop_assert!((e - m).abs() < 1e-9, "{} vs {}", e, m);
    }

    #[test]
    fn auc_invariant_under_monotone_maps(s in scores(40), flags in prop::collection::vec(any::<bool>(), 40)) {
        let flags = &flags[..s.len()];
        prop_assume!(flags.iter().any(|&f| f) && flags.iter().any(|&f| !f));
        let a = auc(&s, flags).unwrap();
        prop_assert!((a - auc_oracle(&s, flags)).abs() <= 1e-12);
        let warped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert!((auc(&warped, flags).unwrap() - a).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn classification_metrics_match_counting(
        rows in prop::collection::vec((0usize..4, 0usize..4, prop::collection::vec(0.0..1.0f64, 4)), 1..40)
    ) {
        let truth: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let pred: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let scores: Vec<Vec<f64>> = rows.iter().map(|r| {
            let s: f64 = r.2.iter().sum::<f64>() + 1e-9;
            r.2.iter().map(|v| v / s).collect()
        }).collect();
        let Ok(rep) = classification_metrics(&truth, &pred, &scores) else {
            // only a truth set with a single class can make every AUC undefined
            let first = truth[0];
            prop_assert!(truth.iter().all(|&t| t == first));
            return Ok(());
        };
        let acc = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;
        prop_assert_eq!(rep.accuracy, acc);
        for c in 0..4 {
            prop_assert!((rep.per_class_f1[c] - f1_oracle(&truth, &pred, c)).abs() <= 1e-12);
            let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            match rep.per_class_auc[c] {
                Some(v) => prop_assert!((v - auc_oracle(&col, &pos)).abs() <= 1e-12),
                None => prop_assert!(pos.iter().all(|&p| p) || pos.iter().all(|&p| !p)),
            }
        }
        for (t, row) in rep.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), truth.iter().filter(|&&x| x == t).count());
        }
    }

    #[test]
    fn stream_text_round_trip(frames in prop::collection::vec(prop::collection::vec(point(), 0..6), 0..12), rate in 1.0..30.0f64) {
        let s = FrameStream::from_point_lists(rate, frames);
        prop_assert_eq!(parse_stream(&render_stream(&s)).unwrap(), s);
    }

    #[test]
    fn segments_are_ordered_and_inside(counts in prop::collection::vec(prop_oneof![0usize..3, 10usize..30], 60..200)) {
        let lists: Vec<Vec<Point<f64>>> = counts.iter().map(|&n| vec![Point::at(0.0, 1.0, 0.0); n]).collect();
        let s = FrameStream::from_point_lists(10.0, lists);
        let cfg = SegmenterConfig::default();
        let segs = segment_stream(&s, &cfg).unwrap();
        prop_assert_eq!(&segs, &segment_stream(&s, &cfg).unwrap());
        for w in segs.windows(2) {
            prop_assert!(w[0].end_frame < w[1].start_frame);
        }
        for sg in &segs {
            prop_assert!(sg.start_frame <= sg.end_frame && (sg.end_frame as usize) < counts.len());
            prop_assert_eq!(sg.frame_count as u64, sg.end_frame - sg.start_frame + 1);
        }
    }
}
