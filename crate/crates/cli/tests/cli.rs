use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn flowevade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowevade")).args(args).output().unwrap()
}

const SMALL: &str = r#"
name = "cli-small"
seed = 2

[data]
source = "synthetic"
n_features = 8
n_classes = 2
per_class = 120
separation = 3.0

[attack]
epochs = 4

[sweep]
epsilons = [0.0, 0.2]
gan_variants = ["wgan-gp"]
constrained = [true]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn small() -> String {
    SMALL.to_string()
}

fn run_dirs(out: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn sweep_twice_gives_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &small());
    let out = tmp.path().join("runs");
    let args = ["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert!(flowevade(&args).status.success());
    let run = run_dirs(&out).pop().unwrap();
    let first = std::fs::read(run.join("tables/sweep_curve.csv")).unwrap();
    let points = std::fs::read(run.join("tables/sweep_points.csv")).unwrap();
    std::fs::remove_dir_all(&run).unwrap();
    assert!(flowevade(&args).status.success());
    assert_eq!(std::fs::read(run.join("tables/sweep_curve.csv")).unwrap(), first);
    assert_eq!(std::fs::read(run.join("tables/sweep_points.csv")).unwrap(), points);
    assert!(String::from_utf8(first).unwrap().starts_with("epsilon,constrained/wgan-gp\n"));
}

#[test]
fn seed_override_names_a_new_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &small());
    let out = tmp.path().join("runs");
    for seed in ["5", "6"] {
        let o = flowevade(&["prepare-data", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let dirs = run_dirs(&out);
    assert_eq!(dirs.len(), 2);
    assert!(dirs[0].to_str().unwrap().ends_with("-s5"));
    let embedded = std::fs::read_to_string(dirs[0].join("config.toml")).unwrap();
    assert!(embedded.contains("seed = 5"));
    assert!(dirs[0].join("data/train.json").exists());
}

#[test]
fn report_on_a_finished_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &small());
    let out = tmp.path().join("runs");
    let o = flowevade(&["attack", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = run_dirs(&out).pop().unwrap();
    let before = std::fs::read(run.join("tables/evasion.csv")).unwrap();
    let o = flowevade(&["report", "--run", run.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(run.join("tables/evasion.csv")).unwrap(), before);
    for t in ["evasion", "ledger", "perturbation", "budget", "target_metrics", "realization"] {
        assert!(run.join(format!("tables/{t}.csv")).exists(), "{t}");
    }
    let budget = std::fs::read_to_string(run.join("tables/budget.csv")).unwrap();
    assert_eq!(budget.lines().count(), 7);
    assert!(budget.starts_with("features_perturbed,c=0.10,c=0.15,c=0.20,c=0.25,c=0.30\n"));
}

#[test]
fn restricted_config_over_the_limit_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let text = small()
        + "\n[threat]\nmode = \"restricted-blackbox\"\nadversary_pool_size = 1000\nlocal_train_fraction = 0.75\n";
    let cfg = write_config(tmp.path(), "r.toml", &text);
    let out = tmp.path().join("runs");
    let o = flowevade(&["attack", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("740"), "{err}");
    assert!(!out.exists());
}

#[test]
fn invalid_configs_are_diagnosed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &small().replace("separation = 3.0", "separation = 3.0\nwobble = 1"));
    let o = flowevade(&["train-nids", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("wobble") && err.contains("line"), "{err}");

    let missing = flowevade(&["attack", "--config", "/nonexistent/x.toml"]);
    assert!(!missing.status.success());
    assert!(!flowevade(&["explode"]).status.success());
    assert!(!flowevade(&["attack", "--config", cfg.to_str().unwrap(), "--bogus"]).status.success());
}

#[test]
fn relative_data_paths_survive_the_embedded_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &small());
    let out = tmp.path().join("runs");
    assert!(flowevade(&["prepare-data", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status
        .success());
    let run = run_dirs(&out).pop().unwrap();
    let data = tmp.path().join("exp/data");
    std::fs::create_dir_all(&data).unwrap();
    for f in ["train.json", "test.json"] {
        std::fs::copy(run.join("data").join(f), data.join(f)).unwrap();
    }
    let text = small().replace(
        "source = \"synthetic\"\nn_features = 8\nn_classes = 2\nper_class = 120\nseparation = 3.0\n",
        "source = \"container\"\ntrain = \"data/train.json\"\ntest = \"data/test.json\"\n",
    );
    assert!(text.contains("container"));
    let cfg = write_config(&tmp.path().join("exp"), "c.toml", &text);
    let out2 = tmp.path().join("runs2");
    let o = Command::new(env!("CARGO_BIN_EXE_flowevade"))
        .current_dir("/")
        .args(["train-nids", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let embedded = run_dirs(&out2).pop().unwrap().join("config.toml");
    let out3 = tmp.path().join("runs3");
    let o = flowevade(&["train-nids", "--config", embedded.to_str().unwrap(), "--out", out3.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(run_dirs(&out2)[0].file_name(), run_dirs(&out3)[0].file_name());
}
