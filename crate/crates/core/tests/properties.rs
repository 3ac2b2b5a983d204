use langrec::baseline::{score_cosine, CosineModel};
use langrec::dnn::{dnn_posteriors, init_dnn};
use langrec::duration_fusion::{lr_universal, ScoreDurationDensityModel};
use langrec::fusion_eval::{compute_cost, decide, CostParams, DecisionPolicy};
use langrec::gmm::{Covariances, GmmModel};
use langrec::preprocess::length_normalize;
use langrec::scores::{ScoreKind, TrialScoreMatrix};
use langrec::OUT_OF_SET;
use proptest::prelude::*;

fn nonzero_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, len).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-6))
}

fn one_gaussian(mean: [f64; 2], var: [f64; 2]) -> GmmModel {
    GmmModel::new(vec![1.0], vec![mean.to_vec()], Covariances::Diagonal(vec![var.to_vec()])).unwrap()
}

proptest! {
    #[test]
    fn normalized_vectors_have_unit_norm(v in nonzero_vec(7)) {
        let u = length_normalize(&v).unwrap();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_scores_lie_in_unit_interval(a in nonzero_vec(5), b in nonzero_vec(5), x in nonzero_vec(5)) {
        let model = CosineModel {
            format_version: 1,
            languages: vec!["a".into(), "b".into()],
            language_means: vec![length_normalize(&a).unwrap(), length_normalize(&b).unwrap()],
        };
        for s in score_cosine(&model, &length_normalize(&x).unwrap()).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn posteriors_sum_to_one(seed in 0u64..1000, x in prop::collection::vec(-50.0..50.0f64, 4)) {
        let model = init_dnn(&[4, 6, 3], vec!["a".into(), "b".into(), "c".into()], seed).unwrap();
        let p = dnn_posteriors(&model, &x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&q| (0.0..=1.0).contains(&q)));
    }

    #[test]
    fn cost_stays_within_scale(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60), p_oos in 0.0..1.0f64) {
        let name = |k: usize| if k == 3 { OUT_OF_SET.to_string() } else { format!("L{k}") };
        let truth: Vec<(String, String)> = pairs.iter().enumerate().map(|(i, (t, _))| (i.to_string(), name(*t))).collect();
        let dec: Vec<(String, String)> = pairs.iter().enumerate().map(|(i, (_, d))| (i.to_string(), name(*d))).collect();
        let params = CostParams { n_classes: 3, p_oos, scale: 100.0 };
        let cost = compute_cost(&dec, &truth, &params).unwrap().cost;
        prop_assert!((0.0..=100.0 + 1e-9).contains(&cost));
    }

    #[test]
    fn raising_the_threshold_only_adds_rejections(
        scores in prop::collection::vec(-5.0..5.0f64, 3 * 12),
        lo in -6.0..6.0f64,
        step in 0.0..4.0f64,
    ) {
        let m = TrialScoreMatrix::new(
            (0..12).map(|i| i.to_string()).collect(),
            vec![10.0; 12],
            vec!["a".into(), "b".into(), "c".into()],
            scores,
            ScoreKind::Fused,
        ).unwrap();
        let low = decide(&m, &DecisionPolicy::new(lo)).unwrap();
        let high = decide(&m, &DecisionPolicy::new(lo + step)).unwrap();
        for ((_, l), (_, h)) in low.iter().zip(&high) {
            prop_assert!(h == l || h == OUT_OF_SET);
        }
    }

    #[test]
    fn swapping_densities_negates_the_ratio(
        mt in prop::array::uniform2(-3.0..3.0f64),
        mn in prop::array::uniform2(-3.0..3.0f64),
        vt in prop::array::uniform2(0.2..4.0f64),
        vn in prop::array::uniform2(0.2..4.0f64),
        x in prop::array::uniform2(-4.0..4.0f64),
    ) {
        let model = |t: GmmModel, n: GmmModel| ScoreDurationDensityModel {
            format_version: 1,
            source: ScoreKind::Gmm,
            relevance: 16.0,
            universal_target: t,
            universal_nontarget: n,
            languages: vec![],
            per_language_target: vec![],
            per_language_nontarget: vec![],
            fallback: vec![],
        };
        let fwd = lr_universal(&model(one_gaussian(mt, vt), one_gaussian(mn, vn)), x[0], x[1]).unwrap();
        let rev = lr_universal(&model(one_gaussian(mn, vn), one_gaussian(mt, vt)), x[0], x[1]).unwrap();
        prop_assert!((fwd + rev).abs() < 1e-9);
    }
}
