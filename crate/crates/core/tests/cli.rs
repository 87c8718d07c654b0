use std::process::Command;

fn crlogit(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_crlogit")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn toy_reproduction_passes() {
    let (code, text) = crlogit(&["repro", "toy"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("20 cells, 0 failed"));
}

#[test]
fn constrained_route_probability() {
    let (code, text) = crlogit(&[
        "crl", "pathprob", "-n", "@toy", "--beta=-2", "--alpha", "5", "--path", "0,2,4,1",
    ]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("0.731"), "{text}");
}

#[test]
fn simulate_then_estimate_round_trip() {
    let dir = std::env::temp_dir().join(format!("crlogit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let obs = dir.join("obs.txt");
    let obs = obs.to_str().unwrap();
    let (code, text) = crlogit(&[
        "simulate", "-n", "@toy", "--beta=-2", "--alpha", "5", "-c", "500", "--seed", "3", "-o", obs,
    ]);
    assert_eq!(code, 0, "{text}");
    let (code, text) = crlogit(&["estimate", "-n", "@toy", "-o", obs, "--model", "crl", "--alpha", "5"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("converged true"), "{text}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unstable_rl_solve_exits_with_error() {
    let (code, text) = crlogit(&["solve", "-n", "@sioux-falls", "--beta=-0.5,0,1,-0.1,-0.05,-0.3"]);
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("solve failed"), "{text}");
}
