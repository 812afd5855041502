//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 6`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use xdgmg::linalg::{dot, norm};
use xdgmg::prelude::*;
use xdgmg::xdg::orthonormalizer;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = std::result::Result<Outcome, Box<dyn std::error::Error>>;

/// Residual histories of every multigrid solve run so far, for criterion 4.
#[derive(Default)]
struct Histories(Vec<(String, Vec<f64>)>);

fn benchmark(cells: usize, k: usize) -> BenchCase {
    BenchCase::benchmark(cells, k)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}

fn dense_max(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn dof_counts(_: &mut Histories) -> Check {
    let expected = [
        (2, 2, 160),
        (2, 3, 320),
        (2, 5, 896),
        (4, 2, 880),
        (4, 3, 1760),
        (4, 5, 4928),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (cells, k, want) in expected {
        let case = benchmark(cells, k);
        let mesh = BackgroundMesh::build_cartesian(3, &[-1.0; 3], &[1.0; 3], &[cells; 3])?;
        let cutmesh = CutCellMesh::classify_and_build(
            &mesh,
            case.levelset.clone().into_shared(),
            case.geometry(),
        )?;
        let got = XdgIndexMap::build(&cutmesh, &[k])?.len();
        pass &= got == want;
        parts.push(format!("{cells}^3 k={k}: {got}/{want}"));
    }
    Ok(Outcome::new(pass, parts.join(", ")))
}

fn oracle_equivalence(hist: &mut Histories) -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for cells in [2, 4] {
        for k in [2, 3] {
            let disc = Discretization::build(&benchmark(cells, k))?;
            let (xd, _) = disc.solve(SolverKind::Direct)?;
            for kind in [SolverKind::Omg, SolverKind::GmresPmg] {
                let (x, rep) = disc.solve(kind)?;
                let diff = rel_diff(&x, &xd);
                let ok = rep.final_residual <= 1e-10 && diff <= 1e-6;
                pass &= ok;
                parts.push(format!(
                    "{cells}^3 k={k} {kind}: {} it, res {:.1e}, diff {:.1e}{}",
                    rep.iterations,
                    rep.final_residual,
                    diff,
                    if ok { "" } else { " FAIL" }
                ));
                if kind == SolverKind::Omg {
                    hist.0
                        .push((format!("{cells}^3 k={k}"), rep.residual_history));
                }
            }
        }
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn iteration_flatness(hist: &mut Histories) -> Check {
    let mut counts = Vec::new();
    let mut all_converged = true;
    for cells in [4, 8, 16] {
        let mut case = benchmark(cells, 2);
        case.levels = 3;
        let disc = Discretization::build(&case)?;
        let (_, rep) = disc.solve(SolverKind::Omg)?;
        all_converged &= rep.converged;
        counts.push((cells, rep.iterations, disc.hierarchy.num_levels()));
        hist.0
            .push((format!("{cells}^3 k=2 levels 3"), rep.residual_history));
    }
    let max = counts.iter().map(|c| c.1).max().unwrap_or(0) as f64;
    let min = counts.iter().map(|c| c.1).min().unwrap_or(0).max(1) as f64;
    let detail = counts
        .iter()
        .map(|(c, it, l)| format!("{c}^3: {it} it ({l} levels)"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome::new(
        all_converged && max / min <= 2.0,
        format!("{detail}; ratio {:.2}", max / min),
    ))
}

fn monotone_history(hist: &mut Histories) -> Check {
    if hist.0.is_empty() {
        for (cells, k) in [(2, 2), (2, 3), (4, 2)] {
            let (_, rep) = Discretization::build(&benchmark(cells, k))?.solve(SolverKind::Omg)?;
            hist.0
                .push((format!("{cells}^3 k={k}"), rep.residual_history));
        }
    }
    let mut bad = Vec::new();
    for (name, h) in &hist.0 {
        if let Some(i) = h.windows(2).position(|w| w[1] > w[0]) {
            bad.push(format!(
                "{name} at iteration {}: {:e} > {:e}",
                i + 1,
                h[i + 1],
                h[i]
            ));
        }
    }
    let total: usize = hist.0.iter().map(|(_, h)| h.len().saturating_sub(1)).sum();
    Ok(Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} solves, {total} iterations non-increasing", hist.0.len())
        } else {
            bad.join("; ")
        },
    ))
}

fn rm_invariants(hist: &mut Histories) -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for (cells, k) in [(4, 2), (2, 3)] {
        let disc = Discretization::build(&benchmark(cells, k))?;
        let omg = OrthoMultigrid::new(&disc.hierarchy, &disc.case.solver_config())?;
        let (mut ortho, mut image, mut steps) = (0.0f64, 0.0f64, 0usize);
        let mut observer = |_: usize, s: &RmState, m: &BlockSparseMatrix| {
            let (Some(w), Some(z)) = (s.w().last(), s.z().last()) else {
                return;
            };
            steps += 1;
            let last = s.w().len() - 1;
            for (i, wi) in s.w().iter().enumerate() {
                let target = if i == last { 1.0 } else { 0.0 };
                ortho = ortho.max((dot(wi, w) - target).abs());
            }
            let mz = m.matvec(z).expect("dimensions match");
            let dev = mz
                .iter()
                .zip(w)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            image = image.max(dev / m.max_abs());
        };
        let (_, rep) = omg.solve_observed(disc.rhs(), None, &mut observer)?;
        let ok = ortho <= 1e-11 && image <= 1e-11;
        pass &= ok;
        parts.push(format!(
            "{cells}^3 k={k}: {steps} steps, |WtW-I| {ortho:.1e}, |W-MZ|/|M| {image:.1e}"
        ));
        hist.0.push((
            format!("{cells}^3 k={k} instrumented"),
            rep.residual_history,
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn transfer_operators(_: &mut Histories) -> Check {
    let disc = Discretization::build(&benchmark(4, 2))?;
    let h = &disc.hierarchy;
    let mut pass = true;
    let mut parts = Vec::new();
    for l in 0..h.num_levels() - 1 {
        let r = h
            .level(l)
            .restriction
            .as_ref()
            .expect("restriction")
            .to_dense();
        let rtr = r.transpose() * &r;
        let e = dense_max(&(rtr - DMatrix::identity(r.ncols(), r.ncols())));
        pass &= e <= 1e-10;
        parts.push(format!("level {l}->{}: |RtR-I| {e:.1e}", l + 1));

        let m = h.level(l).matrix.to_dense();
        let oracle = r.transpose() * m * &r;
        let coarse = h.level(l + 1).matrix.to_dense();
        let g = dense_max(&(&coarse - &oracle)) / dense_max(&oracle);
        pass &= g <= 1e-11;
        parts.push(format!("Galerkin {}: {g:.1e}", l + 1));
    }
    let p = h.prolongation().to_dense();
    let oracle = p.transpose() * disc.raw_matrix.to_dense() * &p;
    let g = dense_max(&(h.level(0).matrix.to_dense() - &oracle)) / dense_max(&oracle);
    pass &= g <= 1e-11;
    parts.push(format!("Galerkin 0: {g:.1e}"));
    Ok(Outcome::new(pass, parts.join(", ")))
}

/// Observed orders `log2(e_{i}/e_{i+1})` between successive halvings of h.
fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|e| format!("{e:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn convergence_order(_: &mut Histories) -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    let l2 = |case: &BenchCase| -> std::result::Result<f64, Box<dyn std::error::Error>> {
        let disc = Discretization::build(case)?;
        let (x, _) = disc.solve(SolverKind::Direct)?;
        Ok(disc.l2_error(&x)?.expect("exact solution set"))
    };

    let mut errors = Vec::new();
    for (cells, depth) in [(8, 3), (16, 4), (32, 5)] {
        let case = BenchCase {
            dim: 2,
            cells,
            degree: 2,
            quad_depth: Some(depth),
            exact: Manufactured::parse("sphere:0.7")?,
            ..Default::default()
        };
        let mut case = case;
        case.levelset = case.exact.expect("set").level_set();
        errors.push(l2(&case)?);
    }
    let o = orders(&errors);
    pass &= o.iter().all(|&r| r >= 2.7);
    parts.push(format!(
        "2D sphere k=2 errors {} orders {o:.2?}",
        sci(&errors)
    ));

    for k in [2, 3] {
        let mut errors = Vec::new();
        for cells in [2, 4, 8] {
            let mut case = benchmark(cells, k);
            case.set("exact", "plane-sine")?;
            errors.push(l2(&case)?);
        }
        let o = orders(&errors);
        pass &= o.iter().all(|&r| r >= k as f64 + 0.7);
        parts.push(format!(
            "3D plane k={k} errors {} orders {o:.2?}",
            sci(&errors)
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn well_posedness(_: &mut Histories) -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut sphere = BenchCase {
        dim: 2,
        cells: 6,
        degree: 2,
        exact: Manufactured::parse("sphere")?,
        ..Default::default()
    };
    sphere.levelset = sphere.exact.expect("set").level_set();
    let cases = [
        ("2^3 k=2", benchmark(2, 2)),
        ("2^3 k=3", benchmark(2, 3)),
        ("6^2 k=2 sphere", sphere),
    ];
    for (name, case) in cases {
        let disc = Discretization::build(&case)?;
        for (which, m) in [("raw", &disc.raw_matrix), ("agglomerated", disc.matrix())] {
            if m.nrows() > 500 {
                continue;
            }
            let asym = m.asymmetry() / m.max_abs();
            let d = m.to_dense();
            let sym = (&d + d.transpose()) * 0.5;
            let min_eig = sym.symmetric_eigenvalues().min();
            let ok = asym <= 1e-12 && min_eig > 0.0;
            pass &= ok;
            parts.push(format!(
                "{name} {which} (L={}): asym {asym:.1e}, min eig {min_eig:.2e}",
                m.nrows()
            ));
        }
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn agglomeration_safety(_: &mut Histories) -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for (cells, k) in [(4, 2), (4, 3), (4, 5), (8, 2)] {
        let case = benchmark(cells, k);
        let alpha = case.alpha();
        let disc = Discretization::build(&case)?;
        let level = disc.hierarchy.level(0);
        let basis = disc.hierarchy.basis();
        let mut min_fraction = f64::INFINITY;
        let mut failed_cholesky = 0;
        for (a, agg) in level.aggregates.iter().enumerate() {
            min_fraction = min_fraction.min(agg.volume_fraction(&disc.cutmesh));
            let n = basis.len();
            let mut mass = DMatrix::zeros(n, n);
            let mut psi = vec![0.0; n];
            for &j in &agg.cells {
                let rule = disc.cutmesh.quad_volume(j, agg.species)?;
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    basis.values(&level.bounding_boxes[a], x, &mut psi);
                    for c in 0..n {
                        for r in 0..n {
                            mass[(r, c)] += w * psi[r] * psi[c];
                        }
                    }
                }
            }
            if orthonormalizer(&mass).is_none() {
                failed_cholesky += 1;
            }
        }
        let ok = min_fraction >= alpha && failed_cholesky == 0;
        pass &= ok;
        parts.push(format!(
            "{cells}^3 k={k} alpha {alpha}: {} aggregates, min fraction {min_fraction:.3}, {failed_cholesky} Cholesky failures",
            level.aggregates.len()
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn matops_report(_: &mut Histories) -> Check {
    let timings = micro_bench_matops(&benchmark(4, 2), 5)?;
    let ok = !timings.is_empty()
        && timings
            .iter()
            .all(|t| t.median_ms.is_finite() && t.median_ms >= 0.0 && t.nnz > 0);
    let detail = timings
        .iter()
        .map(|t| format!("{} {:.3} ms (nnz {})", t.op, t.median_ms, t.nnz))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome::new(
        ok,
        format!("reported without thresholds: {detail}"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn(&mut Histories) -> Check); 10] = [
        (1, "DOF reproduction", dof_counts),
        (2, "solver-oracle equivalence", oracle_equivalence),
        (3, "iteration flatness", iteration_flatness),
        (4, "residual monotonicity", monotone_history),
        (5, "RM algebraic invariants", rm_invariants),
        (6, "transfer-operator properties", transfer_operators),
        (7, "convergence order", convergence_order),
        (8, "SIP well-posedness", well_posedness),
        (9, "agglomeration safety", agglomeration_safety),
        (10, "matrix-op micro benchmark", matops_report),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut hist = Histories::default();
    let mut failures = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let clock = Instant::now();
        let outcome =
            check(&mut hist).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        if !outcome.pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {} {name} ({:.1} s): {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            clock.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
