//! Exhaustive exact solver for small instances.
//!
//! For each candidate type vector `t`, enumerates every assignment matrix
//! built from per-VM columns that already satisfy the VM-local constraints
//! (capacity, conflict, co-location, full deployment, occupancy). Global
//! constraints are checked on the assembled matrix. Ties on price go to the
//! lexicographically smallest `(t, a)` with `a` flattened row-major.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::model::{validate, Constraint, DeploymentProblem, GroupBound, RequireProvide, Resource, Solution};
use crate::price::Price;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCaps {
    pub max_components: usize,
    pub max_vms: usize,
    pub max_offers: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps {
            max_components: 5,
            max_vms: 4,
            max_offers: 6,
        }
    }
}

impl OracleCaps {
    pub fn admits(&self, problem: &DeploymentProblem) -> bool {
        problem.n_components() <= self.max_components
            && problem.n_vms() <= self.max_vms
            && problem.n_offers() <= self.max_offers
    }
}

/// Column bitmask: bit `i` set iff component `i+1` is on the VM.
type Column = u32;

struct Local<'a> {
    problem: &'a DeploymentProblem,
    conflicts: Vec<(usize, usize)>,
    colocations: Vec<(usize, usize)>,
    full: Vec<(usize, Column)>,
}

impl<'a> Local<'a> {
    fn new(problem: &'a DeploymentProblem) -> Self {
        let mut conflicts = Vec::new();
        let mut colocations = Vec::new();
        for c in &problem.app.constraints {
            match *c {
                Constraint::Conflict { i, j } => conflicts.push((i - 1, j - 1)),
                Constraint::Colocation { i, j } => colocations.push((i - 1, j - 1)),
                _ => {}
            }
        }
        let full = problem
            .app
            .components
            .iter()
            .filter(|c| c.full_deployment)
            .map(|c| {
                let mask = problem.conflicts_of(c.id).iter().fold(0, |m, &j| m | 1 << (j - 1));
                (c.id - 1, mask)
            })
            .collect();
        Local {
            problem,
            conflicts,
            colocations,
            full,
        }
    }

    fn column_ok(&self, col: Column, offer_id: u32) -> bool {
        let has = |i: usize| col & (1 << i) != 0;
        if offer_id == 0 {
            return col == 0;
        }
        if col == 0 {
            return false;
        }
        let offer = self.problem.offer(offer_id).expect("offer in catalog");
        for r in Resource::ALL {
            let load: u64 = (0..self.problem.n_components())
                .filter(|&i| has(i))
                .map(|i| self.problem.app.components[i].requirements.get(r))
                .sum();
            if load > offer.spec.get(r) {
                return false;
            }
        }
        if self.conflicts.iter().any(|&(i, j)| has(i) && has(j)) {
            return false;
        }
        if self.colocations.iter().any(|&(i, j)| has(i) != has(j)) {
            return false;
        }
        self.full
            .iter()
            .all(|&(i, conflict_mask)| has(i) || col & conflict_mask != 0)
    }
}

fn flatten(columns: &[Column], n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n * columns.len());
    for i in 0..n {
        for &c in columns {
            out.push(((c >> i) & 1) as u8);
        }
    }
    out
}

/// Finds a minimum-price solution, or `None` if the instance is infeasible.
///
/// VM slots are interchangeable, so every optimum has a slot permutation
/// with `t` sorted ascending, and the lexicographically smallest optimal `t`
/// is itself sorted. Only sorted type vectors are therefore visited, in
/// `(price, t)` order; the first one admitting a feasible assignment is the
/// answer.
pub fn brute_force(problem: &DeploymentProblem, caps: OracleCaps) -> Result<Option<Solution>> {
    if !caps.admits(problem) {
        return Err(Error::CapsExceeded(format!(
            "N={} M={} O={} exceeds caps {caps:?}",
            problem.n_components(),
            problem.n_vms(),
            problem.n_offers()
        )));
    }
    let n = problem.n_components();
    let m = problem.n_vms();
    let local = Local::new(problem);
    let global = Global::new(problem);

    let mut type_values: Vec<u32> = std::iter::once(0).chain(problem.offers.iter().map(|o| o.id)).collect();
    type_values.sort_unstable();
    let price_of = |id: u32| -> Price { problem.offer(id).map(|o| o.price).unwrap_or(Price::ZERO) };
    let columns_for: Vec<Vec<Column>> = type_values
        .iter()
        .map(|&id| (0..(1u32 << n)).filter(|&col| local.column_ok(col, id)).collect())
        .collect();

    let mut candidates: Vec<(Price, Vec<usize>)> = (0..type_values.len())
        .filter(|&x| !columns_for[x].is_empty())
        .combinations_with_replacement(m)
        .map(|idx| (idx.iter().map(|&x| price_of(type_values[x])).sum(), idx))
        .collect();
    candidates.sort_unstable();

    for (_, idx) in candidates {
        if let Some(flat) = best_assignment(&global, &idx, &columns_for, n) {
            let t: Vec<u32> = idx.iter().map(|&x| type_values[x]).collect();
            let a = flat.chunks(m).map(<[u8]>::to_vec).collect();
            let sol = Solution::from_assignment(problem, a, t);
            debug_assert!(validate(problem, &sol).map(|v| v.is_empty()).unwrap_or(false));
            return Ok(Some(sol));
        }
    }
    Ok(None)
}

/// Lexicographically smallest feasible assignment for a fixed type vector.
fn best_assignment(global: &Global, types: &[usize], columns_for: &[Vec<Column>], n: usize) -> Option<Vec<u8>> {
    let m = types.len();
    let mut choice = vec![0usize; m];
    let mut best: Option<Vec<u8>> = None;
    let mut columns = vec![0 as Column; m];
    loop {
        for k in 0..m {
            columns[k] = columns_for[types[k]][choice[k]];
        }
        if global.feasible(&columns) {
            let flat = flatten(&columns, n);
            if best.as_ref().is_none_or(|b| flat < *b) {
                best = Some(flat);
            }
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < columns_for[types[pos]].len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Constraints that depend on whole rows of `a`.
struct Global {
    required: Vec<usize>,
    exclusive_groups: Vec<Vec<usize>>,
    require_provide: Vec<(RequireProvide, Vec<usize>)>,
    bounds: Vec<GroupBound>,
}

impl Global {
    fn new(problem: &DeploymentProblem) -> Self {
        let exclusive = problem.exclusive_members();
        let mut exclusive_groups = Vec::new();
        let mut require_provide = Vec::new();
        for c in &problem.app.constraints {
            match c {
                Constraint::ExclusiveDeployment { group } => exclusive_groups.push(group.clone()),
                Constraint::RequireProvide(rp) => {
                    let guards = [rp.i, rp.j].into_iter().filter(|id| exclusive.contains(id)).collect();
                    require_provide.push((*rp, guards));
                }
                _ => {}
            }
        }
        Global {
            required: (1..=problem.n_components())
                .filter(|id| !exclusive.contains(id))
                .collect(),
            exclusive_groups,
            require_provide,
            bounds: problem.all_group_bounds(),
        }
    }

    fn feasible(&self, columns: &[Column]) -> bool {
        let count = |id: usize| -> u64 { columns.iter().filter(|&&c| c & (1 << (id - 1)) != 0).count() as u64 };
        self.required.iter().all(|&id| count(id) > 0)
            && self
                .exclusive_groups
                .iter()
                .all(|g| g.iter().filter(|&&id| count(id) > 0).count() == 1)
            && self
                .require_provide
                .iter()
                .all(|(rp, guards)| guards.iter().any(|&id| count(id) == 0) || rp.holds(count(rp.i), count(rp.j)))
            && self.bounds.iter().all(|gb| {
                let total: u64 = gb.members.iter().map(|&id| count(id)).sum();
                gb.op.holds(total, gb.value as u64)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Application, Component, HardwareVector, VmOffer};

    fn problem(n: usize, constraints: Vec<Constraint>, m: usize, offers: Vec<VmOffer>) -> DeploymentProblem {
        let app = Application {
            name: "t".into(),
            components: (1..=n)
                .map(|i| Component::new(i, format!("C{i}"), HardwareVector::new(1, 1, 1)))
                .collect(),
            constraints,
            vm_budget: m,
        };
        DeploymentProblem::new(app, offers).unwrap()
    }

    #[test]
    fn cheapest_adequate_offer() {
        let offers = vec![
            VmOffer::new(1, 2, 2, 2, Price::from_millis(10_000)),
            VmOffer::new(2, 1, 1, 1, Price::from_millis(5_000)),
        ];
        let p = problem(1, vec![], 1, offers);
        let sol = brute_force(&p, OracleCaps::default()).unwrap().unwrap();
        assert_eq!(sol.price_total, Price::from_millis(5_000));
        assert_eq!(sol.t, vec![2]);
        assert_eq!(sol.a, vec![vec![1]]);
    }

    #[test]
    fn conflict_single_vm_infeasible() {
        let p = problem(
            2,
            vec![Constraint::conflict(1, 2)],
            1,
            vec![VmOffer::new(1, 4, 4, 4, Price::from_millis(1))],
        );
        assert_eq!(brute_force(&p, OracleCaps::default()).unwrap(), None);
    }

    #[test]
    fn colocation_single_lease() {
        let p = problem(
            2,
            vec![Constraint::colocation(1, 2)],
            2,
            vec![VmOffer::new(1, 2, 2, 2, Price::from_millis(700))],
        );
        let sol = brute_force(&p, OracleCaps::default()).unwrap().unwrap();
        assert_eq!(sol.t.iter().filter(|&&t| t != 0).count(), 1);
        assert_eq!(sol.a[0], sol.a[1]);
        assert_eq!(sol.price_total, Price::from_millis(700));
        // Lexicographic tie-break puts the lease on the last slot (t = [0, 1]).
        assert_eq!(sol.t, vec![0, 1]);
    }

    #[test]
    fn caps_enforced() {
        let p = problem(6, vec![], 1, vec![VmOffer::new(1, 9, 9, 9, Price::from_millis(1))]);
        assert!(matches!(
            brute_force(&p, OracleCaps::default()),
            Err(Error::CapsExceeded(_))
        ));
    }
}
