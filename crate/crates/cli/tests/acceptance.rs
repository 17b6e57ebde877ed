//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapval::evaluation::{evaluate_splits, EvaluationConfig};
use shapval::shapley::{exact_shapley_modes, loo_values, monte_carlo_shapley, DEFAULT_EXACT_CAP};
use shapval::{filter_iris_2d, AggregationMode, Dataset, McConfig, ModelKind, ModelSpec, SelectionDirection};

use AggregationMode::{Absolute, Original, Zero};
use SelectionDirection::{Highest, Lowest};

type Outcome = Result<String, String>;

fn mask_of(s: &[usize]) -> usize {
    s.iter().map(|&i| 1usize << i).sum()
}

/// A game given by its full utility table, indexed by coalition bitmask.
#[derive(Clone)]
struct TableGame {
    n: usize,
    table: Vec<f64>,
}

impl TableGame {
    fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        Self {
            n,
            table: (0..1usize << n).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// Random game in which player 0 is a dummy and players 1 and 2 are
    /// interchangeable.
    fn structured(rng: &mut ChaCha8Rng, n: usize) -> Self {
        // value depends on (players >= 3 present, how many of {1,2} present)
        let rest_bits = n - 3;
        let base: Vec<f64> = (0..(1usize << rest_bits) * 3).map(|_| rng.random::<f64>()).collect();
        let table = (0..1usize << n)
            .map(|mask| {
                let pair = ((mask >> 1) & 1) + ((mask >> 2) & 1);
                let rest = mask >> 3;
                base[rest * 3 + pair]
            })
            .collect();
        Self { n, table }
    }

    fn u(&self, s: &[usize]) -> f64 {
        self.table[mask_of(s)]
    }

    fn plus(&self, other: &TableGame) -> TableGame {
        TableGame {
            n: self.n,
            table: self.table.iter().zip(&other.table).map(|(a, b)| a + b).collect(),
        }
    }

    fn exact(&self, modes: &[AggregationMode]) -> Vec<Vec<f64>> {
        let u = |s: &[usize]| self.u(s);
        exact_shapley_modes(&u, self.n, modes, DEFAULT_EXACT_CAP).expect("exact values")
    }
}

fn synthetic_games() -> Vec<(TableGame, TableGame)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    (0..200)
        .map(|_| {
            let n = rng.random_range(3..=8);
            (TableGame::structured(&mut rng, n), TableGame::random(&mut rng, n))
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let games = synthetic_games();
    let mut worst_eff: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    let mut worst_add: f64 = 0.0;
    for (g, h) in &games {
        let v = g.exact(&[Original]).remove(0);
        let eff = (v.iter().sum::<f64>() - (g.table[g.table.len() - 1] - g.table[0])).abs();
        worst_eff = worst_eff.max(eff);
        worst_sym = worst_sym.max((v[1] - v[2]).abs());
        if v[0] != 0.0 {
            return Err(format!("dummy player got {}", v[0]));
        }
        let sum = g.plus(h).exact(&[Original]).remove(0);
        let parts = h.exact(&[Original]).remove(0);
        for i in 0..g.n {
            worst_add = worst_add.max((sum[i] - (v[i] + parts[i])).abs());
        }
        // the random component on its own must also be efficient
        let eff_h = (parts.iter().sum::<f64>() - (h.table[h.table.len() - 1] - h.table[0])).abs();
        worst_eff = worst_eff.max(eff_h);
    }
    // clamped modes are not additive: at least one game must show it
    let clamped_violation = games
        .iter()
        .map(|(g, h)| {
            let lhs = g.plus(h).exact(&[Zero]).remove(0);
            let (a, b) = (g.exact(&[Zero]).remove(0), h.exact(&[Zero]).remove(0));
            (0..g.n).map(|i| (lhs[i] - a[i] - b[i]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let elapsed = started.elapsed();
    let detail = format!(
        "200 games: max efficiency err {worst_eff:.1e}, symmetry err {worst_sym:.1e}, additivity err {worst_add:.1e}, \
         ZERO additivity gap {clamped_violation:.3}, {elapsed:.2?}"
    );
    if worst_eff < 1e-9
        && worst_sym <= 1e-12
        && worst_add < 1e-9
        && clamped_violation > 1e-6
        && elapsed < Duration::from_secs(10)
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ordered(ori: &[f64], zero: &[f64], abs: &[f64]) -> bool {
    (0..ori.len()).all(|i| abs[i] >= zero[i] && zero[i] >= ori[i] && zero[i] >= 0.0 && abs[i] >= 0.0)
}

fn criterion_2() -> Outcome {
    let games = synthetic_games();
    let mut checked = 0;
    for (k, (g, h)) in games.iter().enumerate() {
        for game in [g, h] {
            let v = game.exact(&AggregationMode::ALL);
            if !ordered(&v[0], &v[1], &v[2]) {
                return Err(format!("exact ordering violated on game {k}"));
            }
            let u = |s: &[usize]| game.u(s);
            let cfg = McConfig {
                max_permutations: 200,
                master_seed: k as u64,
                convergence_epsilon: 0.0,
                ..McConfig::default()
            };
            let est = monte_carlo_shapley(&u, game.n, &AggregationMode::ALL, &cfg).map_err(|e| e.to_string())?;
            if !ordered(&est[0].values, &est[1].values, &est[2].values) {
                return Err(format!("Monte Carlo ordering violated on game {k}"));
            }
            checked += 2;
        }
    }
    Ok(format!("{checked} exact + Monte Carlo value sets ordered ABS >= ZERO >= ORI, ZERO/ABS >= 0"))
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let majority = TableGame {
        n: 3,
        table: (0..8usize).map(|m| if m.count_ones() >= 2 { 1.0 } else { 0.0 }).collect(),
    };
    let mut games = vec![majority];
    games.extend((0..5).map(|_| TableGame::random(&mut rng, 8)));
    let mut worst_z: f64 = 0.0;
    for (k, game) in games.iter().enumerate() {
        let exact = game.exact(&[Original]).remove(0);
        let u = |s: &[usize]| game.u(s);
        let cfg = McConfig {
            max_permutations: 50_000,
            master_seed: 1000 + k as u64,
            convergence_epsilon: 0.0,
            ..McConfig::default()
        };
        let est = monte_carlo_shapley(&u, game.n, &[Original], &cfg).map_err(|e| e.to_string())?.remove(0);
        for i in 0..game.n {
            let se = est.standard_error(i);
            let err = (est.values[i] - exact[i]).abs();
            if err > 4.0 * se {
                return Err(format!("game {k} player {i}: |{:.5} - {:.5}| > 4 * {se:.2e}", est.values[i], exact[i]));
            }
            if se > 0.0 {
                worst_z = worst_z.max(err / se);
            }
        }
    }
    let elapsed = started.elapsed();
    let detail = format!("majority + 5 random n=8 games, 50000 permutations: max |z| = {worst_z:.2}, {elapsed:.2?}");
    if elapsed < Duration::from_secs(30) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct IrisRun {
    lines: Vec<(String, bool, String)>,
}

fn iris_experiment() -> Result<IrisRun, String> {
    let started = Instant::now();
    let ds = filter_iris_2d(&Dataset::iris()).map_err(|e| e.to_string())?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mc = McConfig {
        max_permutations: 200,
        master_seed: 7,
        convergence_epsilon: 0.0,
        convergence_window: 100,
        workers,
    };
    let specs = [ModelSpec::logistic(), ModelSpec::linear_svm()];
    let cfg = EvaluationConfig {
        k: 35,
        overlap_k: 10,
        sv_tolerance: 1e-3,
    };
    let ev = evaluate_splits(&ds, 20, &[0, 1, 2, 3, 4], &specs, &cfg, &mc).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    eprintln!("{}", ev.text_table());
    let lr = |mode, dir| ev.mean_accuracy(mode, ModelKind::Logistic, dir).unwrap();

    let mut lines = Vec::new();
    let highs: Vec<f64> = AggregationMode::ALL.iter().map(|&m| lr(m, Highest)).collect();
    lines.push((
        "4a LR highest-K >= 95% for ORI/ZERO/ABS".to_string(),
        highs.iter().all(|&a| a >= 0.95),
        format!("ORI {:.2}% ZERO {:.2}% ABS {:.2}%", highs[0] * 100.0, highs[1] * 100.0, highs[2] * 100.0),
    ));
    let abs_gap = lr(Absolute, Highest) - lr(Absolute, Lowest);
    lines.push((
        "4b ABS lowest-K LR >= 20 pp below ABS highest-K".to_string(),
        abs_gap >= 0.20,
        format!(
            "highest {:.2}% lowest {:.2}% gap {:.2} pp",
            lr(Absolute, Highest) * 100.0,
            lr(Absolute, Lowest) * 100.0,
            abs_gap * 100.0
        ),
    ));
    let ori_gap = lr(Original, Highest) - lr(Original, Lowest);
    lines.push((
        "4c ORI LR gap < ABS LR gap".to_string(),
        ori_gap < abs_gap,
        format!("ORI gap {:.2} pp, ABS gap {:.2} pp", ori_gap * 100.0, abs_gap * 100.0),
    ));
    lines.push((
        "4  runtime < 15 min".to_string(),
        elapsed < Duration::from_secs(15 * 60),
        format!("{elapsed:.1?} on {workers} worker(s)"),
    ));
    let abs_overlap = ev.mean_overlap(Absolute, Highest).unwrap();
    let ori_overlap = ev.mean_overlap(Original, Highest).unwrap();
    lines.push((
        "5  mean overlap(ABS, highest10) >= mean overlap(ORI, highest10)".to_string(),
        abs_overlap >= ori_overlap,
        format!("ABS {abs_overlap:.1} vs ORI {ori_overlap:.1} support vectors"),
    ));
    Ok(IrisRun { lines })
}

fn shapval(args: &[&str], cwd: &Path) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_shapval"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let compute = [
        "compute", "--iris-2d", "--test-count", "20", "--model", "svm", "--modes", "ori,zero,abs",
        "--permutations", "60", "--seed", "7", "--epsilon", "0",
    ];
    let evaluate = [
        "evaluate", "--iris-2d", "--k", "35", "--models", "logistic,svm", "--permutations", "10",
        "--split-seeds", "0,1", "--seed", "3",
    ];
    for base in [&compute[..], &evaluate[..]] {
        let mut outputs = Vec::new();
        for workers in ["1", "8", "1"] {
            let mut args = base.to_vec();
            args.extend(["--workers", workers]);
            outputs.push(shapval(&args, dir.path())?);
        }
        if outputs.iter().any(|o| o != &outputs[0]) {
            return Err(format!("`{}` output differs across runs/worker counts", base[0]));
        }
    }
    // a recorded manifest replays to the same bytes
    let out_path = dir.path().join("values.json");
    let mut args = compute.to_vec();
    args.extend(["--workers", "4", "--out", out_path.to_str().unwrap()]);
    shapval(&args, dir.path())?;
    let manifest = dir.path().join("values.json.manifest.json");
    let replayed = shapval(&["replay", manifest.to_str().unwrap()], dir.path())?;
    if replayed != std::fs::read(&out_path).map_err(|e| e.to_string())? {
        return Err("replayed manifest output differs".into());
    }
    Ok("compute and evaluate byte-identical with --workers 1/8/1; manifest replay identical".into())
}

fn criterion_7() -> Outcome {
    // players 0 and 1 share feature row A; utility sums weights of the
    // distinct rows present
    let row_of = [0usize, 0, 1, 2, 3];
    let weight = [1.0, 0.5, 0.25, 0.125];
    let u = |s: &[usize]| {
        let mut rows: Vec<usize> = s.iter().map(|&i| row_of[i]).collect();
        rows.sort_unstable();
        rows.dedup();
        rows.iter().map(|&r| weight[r]).sum::<f64>()
    };
    let loo = loo_values(&u, 5).map_err(|e| e.to_string())?;
    let sv = exact_shapley_modes(&u, 5, &[Original], DEFAULT_EXACT_CAP).map_err(|e| e.to_string())?.remove(0);
    let detail = format!("LOO = {:?}, exact ORI = ({:.3}, {:.3}) for the duplicated pair", &loo[..2], sv[0], sv[1]);
    let split = (sv[0] - 0.5).abs() < 1e-12 && (sv[1] - 0.5).abs() < 1e-12;
    if loo[0] == 0.0 && loo[1] == 0.0 && sv[0] > 0.0 && sv[1] > 0.0 && split {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    fn line(name: &str, outcome: Outcome) -> (String, bool, String) {
        match outcome {
            Ok(d) => (name.to_string(), true, d),
            Err(d) => (name.to_string(), false, d),
        }
    }
    let mut results = vec![
        line("1  axiom suite (efficiency, symmetry, dummy, additivity)", criterion_1()),
        line("2  mode ordering ABS >= ZERO >= ORI", criterion_2()),
        line("3  Monte Carlo vs exact within 4 standard errors", criterion_3()),
    ];
    match iris_experiment() {
        Ok(run) => results.extend(run.lines),
        Err(e) => results.push(line("4/5 Iris retraining experiment", Err(e))),
    }
    results.push(line("6  determinism across invocations and worker counts", criterion_6()));
    results.push(line("7  LOO duplicate scenario", criterion_7()));

    let mut failed = 0;
    for (name, ok, detail) in &results {
        println!("[{}] {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
