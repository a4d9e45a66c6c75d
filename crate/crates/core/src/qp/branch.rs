//! Depth-first branch and bound over binary variables.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::{solve_relaxation, LinearConstraint, QuadraticProgram, Sense, SolveResult, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

pub fn solve_with_binaries_using(qp: &QuadraticProgram, settings: &SolverSettings) -> Result<SolveResult> {
    qp.validate()?;
    qp.check_convex()?;
    let nb = qp.binaries.len();
    if nb > settings.max_binaries {
        return Err(Error::TooManyBinaries { count: nb, limit: settings.max_binaries });
    }
    if nb == 0 {
        return Ok(solve_relaxation(qp, &qp.lower, &qp.upper, settings));
    }

    let n = qp.num_vars();
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, c) in qp.constraints.iter().enumerate() {
        for &(j, _) in &c.terms {
            if rows_of[j].last() != Some(&k) {
                rows_of[j].push(k);
            }
        }
    }
    let mut binaries = qp.binaries.clone();
    binaries.sort_unstable();
    binaries.dedup();

    let mut incumbent: Option<SolveResult> = None;
    let mut best = f64::INFINITY;
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut complete = true;
    let mut stack: Vec<(Vec<f64>, Vec<f64>)> = vec![(qp.lower.clone(), qp.upper.clone())];
    // Rounded assignments already evaluated, so each is solved only once.
    let mut tried: BTreeSet<Vec<bool>> = BTreeSet::new();

    let improves = |obj: f64, best: f64| best == f64::INFINITY || obj < best - 1e-9 * (1.0 + best.abs());

    while let Some((lo, up)) = stack.pop() {
        if nodes >= settings.max_nodes {
            complete = false;
            break;
        }
        nodes += 1;
        let rel = solve_relaxation(qp, &lo, &up, settings);
        iterations += rel.iterations;
        match rel.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => {
                let mut r = rel;
                r.nodes = nodes;
                r.iterations = iterations;
                return Ok(r);
            }
            SolveStatus::IterationLimit if elastic_infeasible(qp, &lo, &up, settings) => {
                log::debug!("branch-and-bound node {nodes} stalled and has no feasible point; pruned");
                continue;
            }
            SolveStatus::IterationLimit => {
                log::warn!("branch-and-bound node {nodes} hit the iteration limit; subtree skipped");
                log::trace!("node bounds {:?}", binaries.iter().map(|&j| (j, lo[j], up[j])).collect::<Vec<_>>());
                complete = false;
                continue;
            }
        }
        if !improves(rel.objective, best) {
            continue;
        }

        let frac = |j: usize| rel.x[j].min(1.0 - rel.x[j]);
        let mut branch_on: Option<usize> = None;
        for &j in &binaries {
            let f = frac(j);
            if f > settings.integrality_tol && branch_on.map_or(true, |b| f > frac(b)) {
                branch_on = Some(j);
            }
        }

        // Round (or flip) each binary while keeping its rows satisfied at
        // the relaxed point, then re-solve with the assignment fixed.
        let mut point = rel.x.clone();
        for &j in &binaries {
            let r = if lo[j] == up[j] { lo[j] } else { point[j].round() };
            let mut chosen = r;
            for cand in [r, 1.0 - r] {
                if cand < lo[j] || cand > up[j] {
                    continue;
                }
                point[j] = cand;
                let ok = rows_of[j].iter().all(|&k| {
                    let c = &qp.constraints[k];
                    c.violation(&point) <= 1e-7 * (1.0 + c.rhs.abs())
                });
                if ok {
                    chosen = cand;
                    break;
                }
            }
            point[j] = chosen;
        }
        if tried.insert(binaries.iter().map(|&j| point[j] > 0.5).collect()) {
            let mut flo = lo.clone();
            let mut fup = up.clone();
            for &j in &binaries {
                flo[j] = point[j];
                fup[j] = point[j];
            }
            let fixed = solve_relaxation(qp, &flo, &fup, settings);
            iterations += fixed.iterations;
            if fixed.status == SolveStatus::Optimal && improves(fixed.objective, best) {
                best = fixed.objective;
                incumbent = Some(fixed);
            }
        }

        let j = match branch_on {
            Some(j) => j,
            None => continue,
        };
        if !improves(rel.objective, best) {
            continue;
        }
        let near = rel.x[j].round();
        let mut first = (lo.clone(), up.clone());
        first.0[j] = near;
        first.1[j] = near;
        let mut second = (lo, up);
        second.0[j] = 1.0 - near;
        second.1[j] = 1.0 - near;
        stack.push(second);
        stack.push(first);
    }

    Ok(match incumbent {
        Some(mut r) => {
            r.nodes = nodes;
            r.iterations = iterations;
            if !complete {
                r.status = SolveStatus::IterationLimit;
            }
            r
        }
        None => {
            let status = if complete { SolveStatus::Infeasible } else { SolveStatus::IterationLimit };
            let mut r = SolveResult::without_solution(n, qp.constraints.len(), status, iterations);
            r.nodes = nodes;
            r
        }
    })
}

/// Minimum total constraint violation over the box `lo..up`. Always feasible
/// and bounded, so it settles nodes where the main solve stalls on an
/// infeasible subproblem without producing a certificate.
fn elastic_infeasible(qp: &QuadraticProgram, lo: &[f64], up: &[f64], settings: &SolverSettings) -> bool {
    let n = qp.num_vars();
    let mut lp = QuadraticProgram { lower: lo.to_vec(), upper: up.to_vec(), cost: vec![0.0; n], ..QuadraticProgram::default() };
    let mut scale = 1.0f64;
    for c in &qp.constraints {
        let mut terms = c.terms.clone();
        if matches!(c.sense, Sense::Le | Sense::Eq) {
            terms.push((lp.add_variable(0.0, f64::INFINITY, 1.0), -1.0));
        }
        if matches!(c.sense, Sense::Ge | Sense::Eq) {
            terms.push((lp.add_variable(0.0, f64::INFINITY, 1.0), 1.0));
        }
        scale = scale.max(c.rhs.abs());
        lp.constraints.push(LinearConstraint { terms, sense: c.sense, rhs: c.rhs });
    }
    let r = solve_relaxation(&lp, &lp.lower, &lp.upper, settings);
    r.status == SolveStatus::Optimal && r.objective > 1e-6 * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elastic_check_separates_feasible_boxes() {
        let mut qp = QuadraticProgram::new();
        let x = qp.add_variable(0.0, 1.0, 1.0);
        let y = qp.add_variable(0.0, 1.0, -1.0);
        qp.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.5);
        let s = SolverSettings::default();
        assert!(!elastic_infeasible(&qp, &qp.lower, &qp.upper, &s));
        assert!(elastic_infeasible(&qp, &[0.0, 0.0], &[1.0, 0.2], &s));
    }
}
