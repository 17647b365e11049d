//! Acceptance checks for the inference core. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

mod common;

use std::time::Instant;

use common::{linf, random_clamp, random_model, random_record, Oracle};
use escalate_core::diagnostics::{apply_setting, longrun_report, LongrunVariant, NeutralRateSweep, SweepTarget};
use escalate_core::fixtures;
use escalate_core::inference::{CaseState, EvidenceEvent, Model};
use escalate_core::observation::ObservationRecord;
use escalate_core::rdceg::{build_transition_matrix, matrix_power, StateDistribution};
use escalate_core::task_model::{conditional_table, neutral_joint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Published interpolated task tables, indexed by K, and solved exponents.
const PUBLISHED: [(&str, [f64; 5], f64); 4] = [
    ("A", [0.00108, 0.00475, 0.02319, 0.11019, 0.40000], 1.051),
    ("T", [0.01080, 0.01341, 0.02742, 0.09277, 0.40000], 2.076),
    ("P", [0.00000002, 0.00112, 0.01860, 0.12098, 0.40000], 0.332),
    ("M", [0.00000002, 0.00112, 0.01860, 0.12098, 0.40000], 0.331),
];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let spec = fixtures::vehicle();
    let mut worst_entry = 0.0f64;
    let mut worst_xi = 0.0f64;
    let mut xi_misses = Vec::new();
    for (id, by_k, xi) in PUBLISHED {
        let s = spec.state_index(id).map_err(|e| e.to_string())?;
        let table = conditional_table(&spec, s).map_err(|e| e.to_string())?;
        for mask in 0..table.n_configs() as u32 {
            let expected = by_k[table.k_of(mask)];
            worst_entry = worst_entry.max((table.prob(mask) - expected).abs());
        }
        check(table.prob(0b1111) == 0.4, format!("{id}: np_1111 = {} is not exactly 0.4", table.prob(0b1111)))?;
        check(
            (table.prob(0) - by_k[0]).abs() <= 5e-4,
            format!("{id}: np_0 = {} vs {}", table.prob(0), by_k[0]),
        )?;
        let solved = table.xi.ok_or("missing exponent")?;
        worst_xi = worst_xi.max((solved - xi).abs());
        if (solved - xi).abs() > 5e-3 {
            xi_misses.push(format!("{id} solved {solved:.4} vs {xi}"));
        }
        check((table.total() - 1.0).abs() < 1e-9, format!("{id}: table sums to {}", table.total()))?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(worst_entry <= 5e-4, format!("max table deviation {worst_entry:.2e} > 5e-4"))?;
    check(elapsed < 1.0, format!("took {elapsed:.3} s"))?;
    check(
        xi_misses.is_empty(),
        format!(
            "tables match (max |Δp| {worst_entry:.1e}, all sum to 1) but exponents differ by > 5e-3: {}",
            xi_misses.join(", ")
        ),
    )?;
    Ok(format!("max |Δp| {worst_entry:.1e}, max |Δξ| {worst_xi:.1e}, {elapsed:.3} s"))
}

fn criterion_2() -> Outcome {
    let spec = fixtures::vehicle();
    let cases: [(&str, f64); 4] = [
        ("A", 0.02 * 0.6 * 0.3 * 0.3),
        ("T", 0.6 * 0.3 * 0.3 * 0.2),
        ("P", 0.001 * 0.001 * 0.2 * 0.1),
        ("M", 0.001 * 0.001 * 0.2 * 0.1),
    ];
    let mut worst = 0.0f64;
    for (id, expected) in cases {
        let s = spec.state_index(id).map_err(|e| e.to_string())?;
        let assignment: Vec<(&str, bool)> = spec.incidence[s]
            .task_ids()
            .map(|t| (spec.tasks[t].id.as_str(), true))
            .collect();
        let got = neutral_joint(&spec, &assignment).map_err(|e| e.to_string())?;
        let rel = ((got - expected) / expected).abs();
        worst = worst.max(rel);
        check(rel <= 1e-9, format!("{id}: {got} vs {expected}"))?;
    }
    Ok(format!("max relative error {worst:.1e}"))
}

struct OracleRun {
    models: usize,
    periods: usize,
    worst_post: f64,
    worst_odds: f64,
}

fn oracle_runs() -> Result<OracleRun, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut run = OracleRun {
        models: 0,
        periods: 0,
        worst_post: 0.0,
        worst_odds: 0.0,
    };
    for _ in 0..60 {
        let spec = random_model(&mut rng);
        let model = Model::new(spec.clone()).map_err(|e| e.to_string())?.into_shared();
        let oracle = Oracle::new(&spec);
        let mut case = CaseState::new(model);
        let mut dist = spec.priors.clone();
        let periods = 25;
        for t in 1..=periods as u64 {
            let record = random_record(&mut rng, &spec, t);
            let clamp_pairs = if rng.gen_bool(0.25) { random_clamp(&mut rng, &spec) } else { Vec::new() };
            let evidence = (!clamp_pairs.is_empty()).then(|| EvidenceEvent {
                t,
                tasks: clamp_pairs.iter().cloned().collect(),
                note: None,
            });
            case = case.step(&record, evidence.as_ref()).map_err(|e| e.to_string())?;

            let mut clamp = vec![None; spec.tasks.len()];
            for (id, v) in &clamp_pairs {
                clamp[spec.task_index(id).unwrap()] = Some(*v);
            }
            let pred = oracle.predict(&dist);
            dist = oracle.update(&pred, &oracle.task_scores(&record), &clamp);

            let point = case.timeline().last();
            run.worst_post = run.worst_post.max(linf(&point.posterior, &dist));
            for i in 1..dist.len() {
                if point.posterior[i] > 0.0 && point.posterior[0] > 0.0 {
                    let direct = point.posterior[i].ln() - point.posterior[0].ln();
                    run.worst_odds = run.worst_odds.max((point.log_odds[i] - direct).abs());
                }
            }
            run.periods += 1;
        }
        run.models += 1;
    }
    Ok(run)
}

fn criterion_3(run: &Result<OracleRun, String>, secs: f64) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    check(run.models >= 50, "fewer than 50 models")?;
    check(run.worst_post <= 1e-10, format!("max L∞ deviation {:.2e}", run.worst_post))?;
    check(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "{} models × {} periods, max L∞ {:.1e}, {secs:.2} s",
        run.models,
        run.periods / run.models,
        run.worst_post
    ))
}

fn criterion_4(run: &Result<OracleRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    check(run.worst_odds <= 1e-10, format!("max log-odds deviation {:.2e}", run.worst_odds))?;
    Ok(format!("max |ρ+λ − direct| {:.1e} over {} periods", run.worst_odds, run.periods))
}

/// Zero pattern of the murder-plot matrix off the diagonal, rows w0..w5.
const MURDER_PLOT_NONZERO: [[bool; 6]; 6] = [
    [false, false, false, false, false, false],
    [true, false, true, true, false, false],
    [true, true, false, false, true, false],
    [true, false, false, false, true, false],
    [true, false, false, true, false, true],
    [true, false, false, false, true, false],
];

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut specs = vec![fixtures::vehicle(), fixtures::murder_plot()];
    specs.extend((0..20).map(|_| random_model(&mut rng)));
    let mut worst_power = 0.0f64;
    for spec in &specs {
        let m = build_transition_matrix(spec);
        check(m.is_row_stochastic(1e-12), "matrix is not row-stochastic")?;
        check(m.is_absorbing(0), "neutral row is not absorbing")?;
        for k in 1..=40u32 {
            let p = matrix_power(&m, k).map_err(|e| e.to_string())?;
            for i in 0..m.n_states() {
                let mut unit = vec![0.0; m.n_states()];
                unit[i] = 1.0;
                let mut d = StateDistribution::new(unit).unwrap();
                for _ in 0..k {
                    d = d.propagate(&m).unwrap();
                }
                worst_power = worst_power.max(linf(p.row(i), d.probs()));
            }
        }
    }
    check(worst_power <= 1e-12, format!("power vs stepping deviation {worst_power:.2e}"))?;
    let m = build_transition_matrix(&fixtures::murder_plot());
    for (i, row) in MURDER_PLOT_NONZERO.iter().enumerate() {
        for (j, &nonzero) in row.iter().enumerate() {
            if i != j {
                check(
                    (m.get(i, j) != 0.0) == nonzero,
                    format!("murder plot entry ({i}, {j}) = {} breaks the zero pattern", m.get(i, j)),
                )?;
            }
        }
    }
    Ok(format!("{} models, power vs stepping {worst_power:.1e}, murder-plot pattern matches", specs.len()))
}

fn criterion_6() -> Outcome {
    let spec = fixtures::vehicle();
    let single = longrun_report(&spec, 1000, LongrunVariant::SingleAbsorbing, None).map_err(|e| e.to_string())?;
    check(single.converged, "single-absorbing run did not converge")?;
    check(
        single.terminal[0] > 1.0 - 1e-6,
        format!("terminal neutral mass {}", single.terminal[0]),
    )?;
    let m = spec.state_index("M").unwrap();
    let sweep: NeutralRateSweep = "0.01:0.99:99".parse().map_err(|e: escalate_core::diagnostics::DiagnosticsError| e.to_string())?;
    let two = longrun_report(&spec, 1000, LongrunVariant::MobilisedAbsorbing { state: m }, Some(sweep))
        .map_err(|e| e.to_string())?;
    let others: f64 = (1..spec.n_states()).filter(|&s| s != m).map(|s| two.terminal[s]).sum();
    check(others < 1e-9, format!("transient terminal mass {others:.2e}"))?;
    for row in &two.sweep {
        check(row.converged, format!("sweep point {} did not converge", row.rate))?;
        let rest = 1.0 - row.neutral - row.absorbing;
        check(rest < 1e-9, format!("sweep point {}: transient mass {rest:.2e}", row.rate))?;
    }
    for w in two.sweep.windows(2) {
        check(
            w[1].neutral >= w[0].neutral,
            format!("neutral mass falls from {} to {} at rate {}", w[0].neutral, w[1].neutral, w[1].rate),
        )?;
    }
    Ok(format!(
        "neutral {:.9} after {} periods; {{N, M}} split {:.4}/{:.4} at rate 0.01 to {:.4}/{:.4} at 0.99",
        single.terminal[0],
        single.periods_to_converge,
        two.sweep[0].neutral,
        two.sweep[0].absorbing,
        two.sweep[98].neutral,
        two.sweep[98].absorbing
    ))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut specs = vec![fixtures::vehicle()];
    specs.extend((0..5).map(|_| random_model(&mut rng)));
    let mut compared = 0;
    for spec in specs {
        let model = Model::new(spec.clone()).map_err(|e| e.to_string())?.into_shared();
        let clamps: Vec<EvidenceEvent> = (1..=4u64)
            .map(|t| EvidenceEvent {
                t,
                tasks: spec.tasks.iter().map(|task| (task.id.clone(), rng.gen_bool(0.5))).collect(),
                note: None,
            })
            .collect();
        let run = |records: &[ObservationRecord]| -> Result<Vec<Vec<f64>>, String> {
            let mut case = CaseState::new(model.clone());
            for (r, e) in records.iter().zip(&clamps) {
                case = case.step(r, Some(e)).map_err(|e| e.to_string())?;
            }
            Ok(case.timeline().steps.iter().map(|p| p.posterior.clone()).collect())
        };
        let base_records: Vec<ObservationRecord> = (1..=4).map(|t| random_record(&mut rng, &spec, t)).collect();
        let reference = run(&base_records)?;
        for _ in 0..100 {
            let perturbed: Vec<ObservationRecord> = base_records
                .iter()
                .map(|r| ObservationRecord {
                    t: r.t,
                    values: r
                        .values
                        .iter()
                        .map(|v| match rng.gen_range(0..4) {
                            0 => None,
                            1 => Some(rng.gen_range(-1e6..1e6)),
                            _ => v.map(|x| x + rng.gen_range(-10.0..10.0)),
                        })
                        .collect(),
                })
                .collect();
            let got = run(&perturbed)?;
            let same = got
                .iter()
                .flatten()
                .zip(reference.iter().flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            check(same, "posterior changed under a perturbation of the intensities")?;
            compared += 1;
        }
    }
    Ok(format!("{compared} perturbations, all bitwise identical"))
}

fn criterion_8() -> Outcome {
    let shifted = apply_setting(&fixtures::vehicle(), &SweepTarget::PriorShift("N".into()), 0.3).map_err(|e| e.to_string())?;
    let expected = [0.269, 0.462, 0.154, 0.077, 0.038];
    let worst = linf(&shifted.priors, &expected);
    check(worst <= 5e-4, format!("priors {:?}, max deviation {worst:.2e}", shifted.priors))?;
    Ok(format!(
        "priors ({}) max deviation {worst:.1e}",
        shifted.priors.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(", ")
    ))
}

fn main() {
    let start = Instant::now();
    let run = oracle_runs();
    let oracle_secs = start.elapsed().as_secs_f64();
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "task table reproduction", criterion_1()),
        (2, "neutral joint products", criterion_2()),
        (3, "oracle equivalence", criterion_3(&run, oracle_secs)),
        (4, "log-odds consistency", criterion_4(&run)),
        (5, "semi-Markov structure", criterion_5()),
        (6, "long-run behaviour", criterion_6()),
        (7, "task sufficiency", criterion_7()),
        (8, "prior-shift semantics", criterion_8()),
    ];
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
