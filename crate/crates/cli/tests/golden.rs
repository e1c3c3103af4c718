use std::path::PathBuf;
use std::process::Command;

const SUBCOMMANDS: [&str; 9] =
    ["geodesics", "dini", "matveev", "mobility", "homography", "weyl", "veronese", "functional", "spectrum"];

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_projequiv")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).expect("utf-8 report"))
}

/// Replaces the wall-time value, the only field allowed to vary between runs.
fn mask_wall_time(report: &str) -> String {
    report
        .lines()
        .map(|l| if l.trim_start().starts_with("\"wall_time\"") { "  \"wall_time\": \"masked\"" } else { l })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn golden_path(sub: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{sub}.json"))
}

#[test]
fn reports_match_goldens() {
    for sub in SUBCOMMANDS {
        let (code, out) = run(&[sub]);
        assert_eq!(code, 0, "{sub} failed:\n{out}");
        let masked = mask_wall_time(&out);
        let path = golden_path(sub);
        if std::env::var_os("PROJEQUIV_UPDATE_GOLDEN").is_some() {
            std::fs::write(&path, &masked).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
        assert_eq!(masked, expected, "{sub} report differs from its golden");
    }
}

#[test]
fn reports_are_deterministic_across_runs_and_thread_counts() {
    for sub in SUBCOMMANDS {
        let (_, a) = run(&[sub]);
        let (_, b) = run(&[sub, "--threads", "1"]);
        let (_, c) = run(&[sub, "--threads", "3"]);
        assert_eq!(mask_wall_time(&a), mask_wall_time(&b), "{sub}");
        assert_eq!(mask_wall_time(&a), mask_wall_time(&c), "{sub}");
    }
}

#[test]
fn csv_outputs_are_deterministic() {
    let dir = std::env::temp_dir();
    for sub in ["geodesics", "spectrum"] {
        let p1 = dir.join(format!("projequiv-{sub}-{}-1.csv", std::process::id()));
        let p2 = dir.join(format!("projequiv-{sub}-{}-2.csv", std::process::id()));
        run(&[sub, "--csv", p1.to_str().unwrap()]);
        run(&[sub, "--csv", p2.to_str().unwrap(), "--threads", "2"]);
        let (a, b) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert!(!a.is_empty());
        assert_eq!(a, b, "{sub}");
        let _ = std::fs::remove_file(p1);
        let _ = std::fs::remove_file(p2);
    }
}
