use bayesseg::cae::{load_word_pairs, Mlp};
use bayesseg::corpus::{load_alignments, load_feature_corpus, AlignmentLevel};
use bayesseg::embed::{build_table, Embedder, EmbeddingTable};
use bayesseg::eval::{format_segmentation, parse_segmentation, PredSegment};
use bayesseg::rng::named_stream;
use bayesseg::segmenter::Constraints;
use bayesseg::synth::{generate, SynthSpec};

#[test]
fn synthetic_dataset_survives_save_and_load() {
    let spec = SynthSpec { n_utterances: 5, n_speakers: 2, speaker_offset_scale: 0.5, n_pairs: 12, ..SynthSpec::default() };
    let d = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    d.save(dir.path()).unwrap();

    let corpus = load_feature_corpus(&dir.path().join("features/list.txt")).unwrap();
    assert_eq!(corpus.len(), d.corpus.len());
    for (a, b) in corpus.utterances().iter().zip(d.corpus.utterances()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.speaker, b.speaker);
        assert_eq!(a.frames.as_slice(), b.frames.as_slice());
    }
    let words = load_alignments(&dir.path().join("words.ali"), &corpus, AlignmentLevel::Word).unwrap();
    assert_eq!(words, d.words);
    let phones = load_alignments(&dir.path().join("phones.ali"), &corpus, AlignmentLevel::Phone).unwrap();
    assert_eq!(phones.len(), d.phones.len());
    assert_eq!(load_word_pairs(&dir.path().join("pairs.txt")).unwrap(), d.pairs);
}

#[test]
fn embedding_cache_and_network_files_reload_exactly() {
    let d = generate(&SynthSpec { n_utterances: 3, ..SynthSpec::default() }).unwrap();
    let c = Constraints::grid(2, 20, 60).unwrap();
    let table = build_table(&d.corpus, &c, &Embedder::Downsample { n_keep: 4 }, 0.1, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.txt");
    table.write_cache(&path).unwrap();
    assert_eq!(EmbeddingTable::read_cache(&path, &d.corpus).unwrap(), table);

    let net = Mlp::init(&[4, 7, 3, 4], &mut named_stream(1, "net")).unwrap();
    let np = dir.path().join("net.txt");
    net.save(&np).unwrap();
    assert_eq!(Mlp::load(&np).unwrap(), net);
}

#[test]
fn segmentation_text_roundtrip() {
    let segs = vec![
        PredSegment { utterance: "a".into(), start: 0, end: 4, cluster: 2 },
        PredSegment { utterance: "a".into(), start: 4, end: 9, cluster: 0 },
        PredSegment { utterance: "b".into(), start: 0, end: 3, cluster: 11 },
    ];
    let text = format_segmentation(&segs);
    assert_eq!(parse_segmentation(&text, "x.seg".as_ref()).unwrap(), segs);
}
