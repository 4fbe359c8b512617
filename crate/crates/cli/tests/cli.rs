use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

fn bayesseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayesseg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bayesseg(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn kv(path: &Path, sep: &str) -> HashMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(sep))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(dir), "--utterances", "6", "--min-words", "2", "--max-words", "3", "--pairs", "20"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn eval_of_the_truth_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &[]);
    // word alignments with the label index as cluster id
    let words = std::fs::read_to_string(data.join("words.ali")).unwrap();
    let seg: String = words
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            format!("{} {} {} {}\n", f[0], f[1], f[2], &f[3][1..])
        })
        .collect();
    let seg_path = tmp.path().join("truth.seg");
    std::fs::write(&seg_path, seg).unwrap();
    let out = tmp.path().join("eval");
    let table = ok(&[
        "eval",
        "--segmentation",
        p(&seg_path),
        "--words",
        p(&data.join("words.ali")),
        "--phones",
        p(&data.join("phones.ali")),
        "--features",
        p(&data.join("features/list.txt")),
        "--out",
        p(&out),
    ]);
    assert!(table.contains("wer_one_to_one"));
    let r = kv(&out.join("report.txt"), " ");
    for key in ["wer_one_to_one", "wer_many_to_one"] {
        assert_eq!(r[key].parse::<f64>().unwrap(), 0.0, "{key}");
    }
    for key in ["cluster_purity", "boundary_f", "token_f", "type_f"] {
        assert_eq!(r[key].parse::<f64>().unwrap(), 1.0, "{key}");
    }
}

#[test]
fn large_profile_cae_encodes_to_the_bottleneck() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &["--dim", "39", "--min-frames", "8", "--max-frames", "12"]);
    let net_dir = tmp.path().join("net");
    ok(&[
        "train-cae",
        "--profile",
        "large",
        "--features",
        p(&data.join("features/list.txt")),
        "--pairs",
        p(&data.join("pairs.txt")),
        "--epochs-pretrain",
        "1",
        "--epochs-cae",
        "1",
        "--out",
        p(&net_dir),
    ]);
    let resolved = kv(&net_dir.join("resolved.cfg"), "=");
    assert_eq!(resolved["cae.batch_size"], "2048");
    assert_eq!(resolved["cae.hidden"].split(',').nth(7), Some("13"));

    let enc = tmp.path().join("enc");
    ok(&[
        "encode",
        "--profile",
        "large",
        "--features",
        p(&data.join("features/list.txt")),
        "--net",
        p(&net_dir.join("net.txt")),
        "--out",
        p(&enc),
    ]);
    let first = std::fs::read_to_string(enc.join("utt0000.feat")).unwrap();
    let header: Vec<&str> = first.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header[2], "13");
    assert_eq!(first.lines().nth(1).unwrap().split_whitespace().count(), 13);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# synthetic run\nseed = 4\nsynth.utterances = 3\n").unwrap();
    let out = tmp.path().join("a");
    ok(&["--config", p(&cfg), "synth", "--utterances", "2", "--out", p(&out)]);
    let r = kv(&out.join("resolved.cfg"), "=");
    assert_eq!(r["seed"], "4");
    assert_eq!(r["synth.utterances"], "2");
    let list = std::fs::read_to_string(out.join("features/list.txt")).unwrap();
    assert_eq!(list.lines().count(), 2);
}

#[test]
fn bad_input_fails_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("dup.cfg");
    std::fs::write(&cfg, "seed = 1\nseed = 2\n").unwrap();
    let out = bayesseg(&["--config", p(&cfg), "synth", "--out", p(&tmp.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let out = bayesseg(&["segment", "--features", p(&tmp.path().join("missing.txt")), "--out", p(&tmp.path().join("y"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
