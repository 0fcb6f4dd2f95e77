//! End-to-end acceptance checks. Every criterion prints one PASS/FAIL line
//! with its measured runtime; the test fails if any criterion fails.
//!
//! Runs without the libtest harness so the lines are always shown:
//! `cargo test -p vawalk-core --test acceptance`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use vawalk_core::engine::{evolve, evolve_snapshots, tv_distance};
use vawalk_core::experiments::{decouple_curve, gaussian_limit_tv, lclt_curve, noise_curve, ExperimentConfig};
use vawalk_core::group::{dinf, free_abelian, tri};
use vawalk_core::harmonic::{check_column_sums, codifferential, differential, harmonic_decompose};
use vawalk_core::measure::{detect_period, Prob, BUILTIN_MEASURES, DEFAULT_PERIOD_BOUND};
use vawalk_core::scalar::{q, qi};
use vawalk_core::spectral::{
    covariance, exponent_hessian, measured_coupling_covariance, structure_prediction, DIFF_STEP,
};
use vawalk_core::{
    EngineConfig, Element, FiniteMeasure, GroupSpec, Matrix, Mode, VertexFunction, WeightedDiagram, Q,
};

type Check = Result<String, String>;

/// Id, title, runtime limit, check.
type Criterion = (u32, &'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn mu(name: &str) -> FiniteMeasure {
    FiniteMeasure::builtin(name).expect("builtin measure")
}

fn exact_diagram(name: &str) -> WeightedDiagram<Q> {
    WeightedDiagram::build(&mu(name)).expect("diagram")
}

fn unit(m: usize, i: usize) -> Vec<Q> {
    (0..m).map(|j| if i == j { qi(1) } else { qi(0) }).collect()
}

fn c1_exact_covariance() -> Check {
    let cases = [("Dinf:lsrw", q(0, 1), q(1, 6)), ("Z:lazy", q(0, 1), q(2, 3)), ("Z:drift", q(1, 3), q(8, 9))];
    let mut notes = Vec::new();
    for (name, zeta, sigma) in cases {
        let r = covariance(&exact_diagram(name)).map_err(|e| e.to_string())?;
        ensure(r.zeta == vec![zeta.clone()], format!("{name}: zeta = {:?}", r.zeta))?;
        ensure(*r.sigma.get(0, 0) == sigma, format!("{name}: sigma = {}", r.sigma.get(0, 0)))?;
        notes.push(format!("{name} zeta={zeta} sigma={sigma}"));
    }
    Ok(notes.join("; "))
}

fn c2_spectral_oracle() -> Check {
    let mut worst = 0.0f64;
    for name in ["Dinf:lsrw", "Tri:uniform6", "Z:lazy"] {
        let d = WeightedDiagram::<f64>::build(&mu(name).to_float()).map_err(|e| e.to_string())?;
        let sigma = covariance(&d).map_err(|e| e.to_string())?.sigma;
        let h = exponent_hessian(&d, DIFF_STEP).map_err(|e| e.to_string())?;
        for i in 0..d.rank() {
            for j in 0..d.rank() {
                let err = (h.get(i, j) + 4.0 * PI * PI * sigma.get(i, j)).abs();
                worst = worst.max(err);
                ensure(err <= 1e-6, format!("{name} entry ({i},{j}) off by {err:.3e}"))?;
            }
        }
    }
    Ok(format!("max |Hess beta + 4 pi^2 Sigma| = {worst:.2e}"))
}

fn c3_harmonic_exactness() -> Check {
    let mut count = 0;
    for name in BUILTIN_MEASURES {
        let d = exact_diagram(name);
        let m = d.rank();
        let chi_zero = |x: &Q| x == &qi(0);
        for i in 0..m {
            let omega = d.hat_form(&unit(m, i)).map_err(|e| e.to_string())?;
            let h = harmonic_decompose(&d, &omega).map_err(|e| e.to_string())?;
            let df = differential(&d, &h.f).map_err(|e| e.to_string())?;
            ensure(h.u.add(&df) == omega, format!("{name} e{i}: omega != u + df"))?;
            let chi = d.chi_c(&h.u);
            let residual = codifferential(&d, &h.u);
            ensure(residual.0.iter().all(|r| chi_zero(&(r + &chi))), format!("{name} e{i}: u not harmonic"))?;
            ensure(d.chi_c(&omega) == chi, format!("{name} e{i}: chi_c(omega) != chi_c(u)"))?;
            // An exact form has zero harmonic part.
            let f = VertexFunction((0..d.order()).map(|x| qi((x * x) as i64 + 1) / qi(3)).collect());
            let exact = differential(&d, &f).map_err(|e| e.to_string())?;
            let he = harmonic_decompose(&d, &exact).map_err(|e| e.to_string())?;
            ensure(he.u.values.iter().all(chi_zero), format!("{name} e{i}: df has harmonic part"))?;
            ensure(he.u.add(&differential(&d, &he.f).unwrap()) == exact, format!("{name}: df != u + df'"))?;
            count += 1;
        }
    }
    Ok(format!("{count} exact decompositions over {} fixtures", BUILTIN_MEASURES.len()))
}

fn c4_transfer_identities() -> Check {
    let groups: Vec<(&str, GroupSpec)> = vec![
        ("Dinf", dinf()),
        ("Tri", tri()),
        ("Z", free_abelian(1)),
        ("Z^2", free_abelian(2)),
        ("Z^3", free_abelian(3)),
        ("Dinf*Z", GroupSpec::builtin("Dinf*Z").unwrap()),
        ("Tri*Tri", GroupSpec::builtin("Tri*Tri").unwrap()),
    ];
    for (name, g) in &groups {
        let p = g.normalized_transfer();
        let b = g.invariant_form();
        ensure(p.matmul(&p).unwrap() == p, format!("{name}: projector not idempotent"))?;
        ensure(b.matmul(&p).unwrap() == p.transpose().matmul(&b).unwrap(), format!("{name}: not B-self-adjoint"))?;
    }
    ensure(dinf().normalized_transfer().is_zero(), "Dinf projector nonzero")?;
    ensure(tri().normalized_transfer().is_zero(), "Tri projector nonzero")?;
    for m in 1..=3 {
        ensure(free_abelian(m).normalized_transfer() == Matrix::identity(m), format!("Z^{m} projector not I"))?;
    }
    let mut sums = 0;
    for name in BUILTIN_MEASURES {
        let d = exact_diagram(name);
        let m = d.rank();
        for i in 0..m {
            let h = harmonic_decompose(&d, &d.hat_form(&unit(m, i)).unwrap()).map_err(|e| e.to_string())?;
            let cols = check_column_sums(&d, &h.u);
            for (l, s) in d.labels().iter().enumerate() {
                let t = d.spec().transfer(s).map_err(|e| e.to_string())?;
                ensure(cols[l] == qi(t[i]), format!("{name}: column sum for {s} is {} not {}", cols[l], t[i]))?;
                sums += 1;
            }
        }
    }
    Ok(format!("projector identities on {} groups; {sums} column sums exact", groups.len()))
}

fn c5_coupling_covariance() -> Check {
    let mut notes = Vec::new();
    for rho in [q(1, 4), q(1, 2), q(3, 4), q(1, 1)] {
        for name in ["Dinf:lsrw", "Z:lazy"] {
            let m = mu(name);
            let measured = measured_coupling_covariance::<Q>(&m, Prob::Exact(rho.clone())).map_err(|e| e.to_string())?;
            let predicted = structure_prediction(&m, &rho).and_then(|p| p.closed_form()).map_err(|e| e.to_string())?;
            ensure(measured == predicted, format!("{name} rho={rho}: measured != predicted"))?;
            let (diag, off) = if name == "Dinf:lsrw" {
                (q(1, 6), qi(0))
            } else {
                (q(2, 3), (qi(1) - &rho) * q(2, 3))
            };
            let expect = Matrix::from_rows(vec![vec![diag.clone(), off.clone()], vec![off, diag]]).unwrap();
            ensure(measured == expect, format!("{name} rho={rho}: got {:?}", measured.to_rows()))?;
        }
        notes.push(format!("rho={rho}"));
    }
    Ok(format!("exact agreement at {}", notes.join(", ")))
}

fn c6_local_clt() -> Check {
    let cfg = ExperimentConfig::default();
    let run = |name: &str, times: &[u64]| lclt_curve(&mu(name), times, &cfg).map_err(|e| e.to_string());
    let lsrw = run("Dinf:lsrw", &[100, 1000])?;
    ensure(lsrw[1].tv + lsrw[1].tv_error < 0.05, format!("Dinf:lsrw n=1000 tv={:.4}", lsrw[1].tv))?;
    ensure(lsrw[1].tv < 0.5 * lsrw[0].tv, format!("Dinf:lsrw tv {:.4} not below half of {:.4}", lsrw[1].tv, lsrw[0].tv))?;
    let lazy = run("Z:lazy", &[900])?;
    ensure(lazy[0].tv + lazy[0].tv_error < 0.03, format!("Z:lazy n=900 tv={:.4}", lazy[0].tv))?;
    let tri = run("Tri:uniform6", &[500])?;
    ensure(tri[0].tv + tri[0].tv_error < 0.1, format!("Tri n=500 tv={:.4}", tri[0].tv))?;
    let srw = run("Dinf:srw", &[1000])?;
    ensure(srw[0].tv + srw[0].tv_error < 0.05, format!("Dinf:srw 2n=1000 tv={:.4}", srw[0].tv))?;
    Ok(format!(
        "Dinf:lsrw {:.4} -> {:.4} (err {:.1e}); Z:lazy {:.4}; Tri {:.4}; Dinf:srw avg {:.4}",
        lsrw[0].tv, lsrw[1].tv, lsrw[1].tv_error, lazy[0].tv, tri[0].tv, srw[0].tv
    ))
}

fn strictly_decreasing(tvs: &[(f64, f64)]) -> bool {
    tvs.windows(2).all(|w| w[0].0 - w[0].1 > w[1].0 + w[1].1)
}

fn c7_noise_sensitivity() -> Check {
    let cfg = ExperimentConfig::default();
    let d = noise_curve(&mu("Dinf:lsrw"), &[Prob::Float(0.2)], &[100, 400, 1600], &cfg).map_err(|e| e.to_string())?;
    let dv: Vec<(f64, f64)> = d.iter().map(|p| (p.tv, p.tv_error)).collect();
    ensure(strictly_decreasing(&dv), format!("Dinf:lsrw not decreasing: {dv:?}"))?;
    ensure(dv[2].0 + dv[2].1 < 0.1, format!("Dinf:lsrw n=1600 tv={:.4}", dv[2].0))?;
    let t = noise_curve(&mu("Tri:uniform6"), &[Prob::Float(0.3)], &[16, 32, 64], &cfg).map_err(|e| e.to_string())?;
    let tv: Vec<(f64, f64)> = t.iter().map(|p| (p.tv, p.tv_error)).collect();
    ensure(strictly_decreasing(&tv), format!("Tri not decreasing: {tv:?}"))?;
    Ok(format!(
        "Dinf:lsrw rho=0.2: {:.4} > {:.4} > {:.4}; Tri rho=0.3: {:.4} > {:.4} > {:.4}",
        dv[0].0, dv[1].0, dv[2].0, tv[0].0, tv[1].0, tv[2].0
    ))
}

fn c8_non_sensitivity() -> Check {
    let cfg = ExperimentConfig::default();
    let m = mu("Z:lazy");
    let mut notes = Vec::new();
    for rho in [0.1, 0.5] {
        let p = noise_curve(&m, &[Prob::Float(rho)], &[2000], &cfg).map_err(|e| e.to_string())?;
        let s = 2.0 / 3.0;
        let c = (1.0 - rho) * s;
        let limit = gaussian_limit_tv(
            &Matrix::from_rows(vec![vec![s, c], vec![c, s]]).unwrap(),
            &Matrix::from_rows(vec![vec![s, 0.0], vec![0.0, s]]).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let gap = (p[0].tv - limit).abs();
        ensure(gap <= 0.02, format!("rho={rho}: tv {:.4} vs limit {limit:.4}", p[0].tv))?;
        notes.push(format!("rho={rho}: {:.4} vs {limit:.4}", p[0].tv));
    }
    let p = noise_curve(&m, &[Prob::Float(0.05)], &[2000], &cfg).map_err(|e| e.to_string())?;
    ensure(p[0].tv - p[0].tv_error > 0.5, format!("rho=0.05: tv {:.4}", p[0].tv))?;
    notes.push(format!("rho=0.05: {:.4}", p[0].tv));
    Ok(notes.join("; "))
}

fn c9_decoupling() -> Check {
    let r = decouple_curve(&mu("Dinf*Z:coupled"), &[100, 400, 1600], &ExperimentConfig::default())
        .map_err(|e| e.to_string())?;
    let v: Vec<(f64, f64)> = r.points.iter().map(|p| (p.tv, p.tv_error)).collect();
    ensure(r.factor_hom_onto_z == [false, true], "factor homomorphism flags")?;
    ensure(strictly_decreasing(&v), format!("not decreasing: {v:?}"))?;
    ensure(v[2].0 + v[2].1 < 0.1, format!("n=1600 tv={:.4}", v[2].0))?;
    Ok(format!("{:.4} > {:.4} > {:.4}", v[0].0, v[1].0, v[2].0))
}

fn c10_engine_oracles() -> Check {
    let ape = mu("Dinf:ape");
    let times: Vec<u64> = (1..=32).collect();
    let cfg = EngineConfig::default();
    let ex = evolve_snapshots(&ape, &times, Mode::Exact, cfg).map_err(|e| e.to_string())?;
    let fl = evolve_snapshots(&ape, &times, Mode::Float, cfg).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (e, f) in ex.iter().zip(&fl) {
        let tv = tv_distance(&e.to_float(), f).map_err(|e| e.to_string())?;
        worst = worst.max(tv.value);
        ensure(tv.value <= 1e-12, format!("n={}: tv {:.3e}", e.n(), tv.value))?;
    }
    let srw2 = evolve(&mu("Dinf:srw"), 2, Mode::Exact, cfg).map_err(|e| e.to_string())?;
    let want: Vec<(Element, Q)> = vec![
        (Element::new(vec![-1], 0), q(1, 4)),
        (Element::new(vec![0], 0), q(1, 2)),
        (Element::new(vec![1], 0), q(1, 4)),
    ];
    let got: Vec<(Element, Q)> = srw2.exact_entries().unwrap().iter().map(|(g, p)| (g.clone(), p.clone())).collect();
    ensure(got == want, format!("SRW^2 = {got:?}"))?;
    for (name, period) in [("Dinf:ape", 1), ("Dinf:srw", 2), ("Dinf:lsrw", 1), ("Tri:uniform6", 1)] {
        let r = detect_period(&mu(name), DEFAULT_PERIOD_BOUND);
        ensure(r.period == Some(period), format!("{name}: period {:?}", r.period))?;
    }
    Ok(format!("max exact/float tv {worst:.1e}; SRW^2 exact; periods ok"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "exact covariance values", Duration::from_secs(1), c1_exact_covariance),
        (2, "spectral oracle agreement", Duration::from_secs(5), c2_spectral_oracle),
        (3, "harmonic solver exactness", Duration::from_secs(1), c3_harmonic_exactness),
        (4, "transfer projector identities", Duration::from_secs(1), c4_transfer_identities),
        (5, "coupling covariance structure", Duration::from_secs(5), c5_coupling_covariance),
        (6, "local CLT convergence", Duration::from_secs(120), c6_local_clt),
        (7, "noise sensitivity", Duration::from_secs(600), c7_noise_sensitivity),
        (8, "non-sensitivity on Z", Duration::from_secs(120), c8_non_sensitivity),
        (9, "decoupling", Duration::from_secs(300), c9_decoupling),
        (10, "engine oracle equivalence", Duration::from_secs(10), c10_engine_oracles),
    ];
    let mut failures = Vec::new();
    for (id, title, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (status, detail) = match (&outcome, elapsed <= limit) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d} (runtime over {}s)", limit.as_secs())),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        println!("criterion {id:>2} [{status}] {title} ({:.2}s): {detail}", elapsed.as_secs_f64());
        if status == "FAIL" {
            failures.push(id);
        }
    }
    if failures.is_empty() {
        println!("all criteria passed");
    } else {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
