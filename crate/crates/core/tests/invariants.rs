use bayesseg::bgmm::{GmmState, NgPrior};
use bayesseg::corpus::{Frames, Utterance};
use bayesseg::dtw::{dtw_cost, Metric};
use bayesseg::embed::{build_table, downsample_embed, Embedder, EmbeddingTable};
use bayesseg::eval::*;
use bayesseg::rng::{indexed_stream, named_stream};
use bayesseg::segmenter::{allowed_segments, backward_sample, forward_filter, run_chain, Constraints, SamplerConfig};
use bayesseg::synth::{generate, SynthSpec};
use proptest::prelude::*;

fn frames(data: Vec<f64>, dim: usize) -> Frames {
    Frames::new(data, dim).unwrap()
}

fn seq(dim: usize) -> impl Strategy<Value = Frames> {
    (1usize..9).prop_flat_map(move |n| prop::collection::vec(-3.0f64..3.0, n * dim).prop_map(move |v| frames(v, dim)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_then_remove_restores_predictive(
        pts in prop::collection::vec((prop::collection::vec(-4.0f64..4.0, 2), 0usize..3), 1..20),
        probe in prop::collection::vec(-4.0f64..4.0, 2),
    ) {
        let mut g = GmmState::new(3, 1.0, NgPrior::new(2, 0.5, 0.1).unwrap()).unwrap();
        let before: Vec<f64> = (0..3).map(|k| g.log_post_pred(&probe, k)).collect();
        for (x, k) in &pts {
            g.add(x, *k).unwrap();
        }
        for (x, k) in pts.iter().rev() {
            g.remove(x, *k).unwrap();
        }
        prop_assert_eq!(g.n_total(), 0);
        for k in 0..3 {
            prop_assert!((g.log_post_pred(&probe, k) - before[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn dtw_is_symmetric_and_zero_on_self(x in seq(2), y in seq(2)) {
        for m in [Metric::Euclidean, Metric::Cosine] {
            let a = dtw_cost(x.view(), y.view(), m).unwrap();
            let b = dtw_cost(y.view(), x.view(), m).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
        }
        prop_assert!(dtw_cost(x.view(), x.view(), Metric::Euclidean).unwrap().abs() < 1e-12);
    }

    #[test]
    fn downsampling_has_fixed_dimension(x in seq(3), n_keep in 1usize..12) {
        prop_assert_eq!(downsample_embed(x.view(), n_keep).unwrap().len(), 3 * n_keep);
    }

    #[test]
    fn backward_samples_tile_with_allowed_spans(
        n in 1usize..30, interval in 1usize..4, min in 1usize..4, extra in 0usize..8, seed in 0u64..1000,
    ) {
        let c = Constraints::grid(interval, min, min + extra).unwrap();
        let u = Utterance { id: "u".into(), speaker: "s".into(), frames: frames(vec![0.0; n], 1), frame_period_ms: 10.0 };
        let spans = allowed_segments(&u, &c);
        let mut rng = named_stream(seed, "tile");
        let entries = spans.iter().map(|&sp| (sp, vec![proptest_val(&mut rng)])).collect();
        let table = EmbeddingTable::from_entries(1, vec![("u".into(), n, entries)]).unwrap();
        let g = GmmState::new(2, 1.0, NgPrior::new(1, 1.0, 0.5).unwrap()).unwrap();
        let lat = forward_filter(&table, 0, &g).unwrap();
        for exponent in [0.01, 1.0] {
            let tiling = backward_sample(&lat, exponent, &mut rng);
            prop_assert_eq!(tiling[0].0, 0);
            prop_assert_eq!(tiling.last().unwrap().1, n);
            for w in tiling.windows(2) {
                prop_assert_eq!(w[0].1, w[1].0);
            }
            prop_assert!(tiling.iter().all(|sp| spans.contains(sp)));
        }
    }

    #[test]
    fn metrics_stay_in_range(
        cuts in prop::collection::btree_set(1usize..40, 0..10),
        clusters in prop::collection::vec(0usize..4, 11),
    ) {
        let truth = vec![
            bayesseg::corpus::TokenAlignment { utterance_id: "u".into(), start_frame: 0, end_frame: 15, label: "a".into() },
            bayesseg::corpus::TokenAlignment { utterance_id: "u".into(), start_frame: 15, end_frame: 28, label: "b".into() },
            bayesseg::corpus::TokenAlignment { utterance_id: "u".into(), start_frame: 28, end_frame: 40, label: "a".into() },
        ];
        let mut bounds: Vec<usize> = std::iter::once(0).chain(cuts).chain(std::iter::once(40)).collect();
        bounds.dedup();
        let pred: Vec<PredSegment> = bounds
            .windows(2)
            .enumerate()
            .map(|(i, w)| PredSegment { utterance: "u".into(), start: w[0], end: w[1], cluster: clusters[i] })
            .collect();
        let g = build_mapping_matrix(&pred, &truth, Unit::Frames);
        prop_assert_eq!(g.total(), 40);
        let p = cluster_purity(&g).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        for mode in [MapMode::ManyToOne, MapMode::OneToOneGreedy] {
            let m = map_clusters(&g, mode);
            let w = wer_for_mapping(&pred, &truth, &g, &m).unwrap();
            prop_assert!(w.wer >= 0.0);
            prop_assert_eq!(w.n_truth, 3);
            prop_assert!(w.substitutions + w.deletions <= 3);
        }
        let b = boundary_prf(&boundaries_from_segments(&pred), &boundaries_from_tokens(&truth), 2);
        for v in [b.precision, b.recall, b.f] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn average_precision_is_a_fraction(d in prop::collection::vec((0.0f64..2.0, any::<bool>()), 2..40)) {
        let (dist, same): (Vec<f64>, Vec<bool>) = d.into_iter().unzip();
        if same.iter().any(|&s| s) {
            let ap = average_precision(&dist, &same).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
        }
    }
}

fn proptest_val(rng: &mut bayesseg::rng::Rng) -> f64 {
    use rand::Rng as _;
    rng.random_range(-2.0..2.0)
}

#[test]
fn chain_state_stays_consistent_and_perfect_prediction_scores_one() {
    let spec = SynthSpec { n_utterances: 8, words_per_utterance: (2, 3), ..SynthSpec::default() };
    let d = generate(&spec).unwrap();
    let c = Constraints::grid(2, 20, 100).unwrap();
    let table = build_table(&d.corpus, &c, &Embedder::Downsample { n_keep: 10 }, 0.05, 3).unwrap();
    let cfg = SamplerConfig { sigma_sq: 0.02, ..SamplerConfig::small_vocab(8) };
    let rec = run_chain(&d.corpus, &table, &cfg, &mut indexed_stream(0, "sampler", 0)).unwrap();
    rec.state.check_invariants().unwrap();
    let pred = segments_from_state(&rec.state);
    for u in d.corpus.utterances() {
        let mut segs: Vec<_> = pred.iter().filter(|p| p.utterance == u.id).collect();
        segs.sort_by_key(|p| p.start);
        assert_eq!(segs[0].start, 0);
        assert_eq!(segs.last().unwrap().end, u.n_frames());
    }

    // the truth itself, one cluster per label
    let labels: Vec<&str> = {
        let mut l: Vec<&str> = d.words.iter().map(|w| w.label.as_str()).collect();
        l.sort();
        l.dedup();
        l
    };
    let perfect: Vec<PredSegment> = d
        .words
        .iter()
        .map(|w| PredSegment {
            utterance: w.utterance_id.clone(),
            start: w.start_frame,
            end: w.end_frame,
            cluster: labels.iter().position(|l| *l == w.label).unwrap(),
        })
        .collect();
    let g = build_mapping_matrix(&perfect, &d.words, Unit::Frames);
    assert_eq!(cluster_purity(&g).unwrap(), 1.0);
    let m = map_clusters(&g, MapMode::OneToOneGreedy);
    assert_eq!(wer_for_mapping(&perfect, &d.words, &g, &m).unwrap().wer, 0.0);
    let b = boundary_prf(&boundaries_from_segments(&perfect), &boundaries_from_tokens(&d.words), 0);
    assert_eq!(b.f, 1.0);
    let tt = token_type_prf(&perfect, &d.words, &d.phones, &PhoneRule::zrs(10.0)).unwrap();
    assert_eq!(tt.token.f, 1.0);
    assert_eq!(tt.word_type.f, 1.0);
}
