//! Domain types for deployment problems and their solutions, plus the
//! constraint checker that every other stage is measured against.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::price::Price;

/// Number of hardware resource dimensions tracked per component and offer.
pub const RESOURCES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Cpu,
    Mem,
    Sto,
}

impl Resource {
    pub const ALL: [Resource; RESOURCES] = [Resource::Cpu, Resource::Mem, Resource::Sto];
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Cpu => "cpu",
            Resource::Mem => "mem",
            Resource::Sto => "sto",
        })
    }
}

/// CPU cores, memory (MB) and storage (MB).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct HardwareVector {
    pub cpu: u64,
    pub mem: u64,
    pub sto: u64,
}

impl HardwareVector {
    pub const fn new(cpu: u64, mem: u64, sto: u64) -> Self {
        HardwareVector { cpu, mem, sto }
    }

    pub fn get(&self, r: Resource) -> u64 {
        match r {
            Resource::Cpu => self.cpu,
            Resource::Mem => self.mem,
            Resource::Sto => self.sto,
        }
    }

    pub fn as_array(&self) -> [u64; RESOURCES] {
        [self.cpu, self.mem, self.sto]
    }

    /// Component-wise `self <= other`.
    pub fn fits_in(&self, other: &HardwareVector) -> bool {
        Resource::ALL.iter().all(|&r| self.get(r) <= other.get(r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Upper,
    Lower,
    Equal,
}

impl BoundKind {
    pub fn op(self) -> BoundOp {
        match self {
            BoundKind::Upper => BoundOp::Le,
            BoundKind::Lower => BoundOp::Ge,
            BoundKind::Equal => BoundOp::Eq,
        }
    }
}

/// Bound on the number of deployed instances of a single component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bound {
    pub kind: BoundKind,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: usize,
    pub name: String,
    pub requirements: HardwareVector,
    #[serde(default)]
    pub full_deployment: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<Bound>,
}

impl Component {
    pub fn new(id: usize, name: impl Into<String>, requirements: HardwareVector) -> Self {
        Component {
            id,
            name: name.into(),
            requirements,
            full_deployment: false,
            bound: None,
        }
    }

    pub fn with_full_deployment(mut self) -> Self {
        self.full_deployment = true;
        self
    }

    pub fn with_bound(mut self, kind: BoundKind, value: u32) -> Self {
        self.bound = Some(Bound { kind, value });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VmOffer {
    pub id: u32,
    #[serde(flatten)]
    pub spec: HardwareVector,
    pub price: Price,
}

impl VmOffer {
    pub fn new(id: u32, cpu: u64, mem: u64, sto: u64, price: Price) -> Self {
        VmOffer {
            id,
            spec: HardwareVector::new(cpu, mem, sto),
            price,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl BoundOp {
    pub fn holds(self, lhs: u64, rhs: u64) -> bool {
        match self {
            BoundOp::Eq => lhs == rhs,
            BoundOp::Le => lhs <= rhs,
            BoundOp::Ge => lhs >= rhs,
        }
    }

    pub fn smt(self) -> &'static str {
        match self {
            BoundOp::Eq => "=",
            BoundOp::Le => "<=",
            BoundOp::Ge => ">=",
        }
    }
}

impl fmt::Display for BoundOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.smt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequireProvideForm {
    /// `n * #i <= m * #j`
    Ratio,
    /// `0 <= n * #j - #i < n`
    Window,
}

/// Component `i` requires instances of component `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequireProvide {
    pub form: RequireProvideForm,
    pub i: usize,
    pub j: usize,
    pub n: u32,
    #[serde(default)]
    pub m: u32,
}

impl RequireProvide {
    pub fn ratio(i: usize, j: usize, n: u32, m: u32) -> Self {
        RequireProvide {
            form: RequireProvideForm::Ratio,
            i,
            j,
            n,
            m,
        }
    }

    pub fn window(i: usize, j: usize, n: u32) -> Self {
        RequireProvide {
            form: RequireProvideForm::Window,
            i,
            j,
            n,
            m: 0,
        }
    }

    pub fn holds(&self, count_i: u64, count_j: u64) -> bool {
        let n = self.n as i64;
        let (ci, cj) = (count_i as i64, count_j as i64);
        match self.form {
            RequireProvideForm::Ratio => n * ci <= self.m as i64 * cj,
            RequireProvideForm::Window => {
                let d = n * cj - ci;
                0 <= d && d < n
            }
        }
    }
}

/// Instance-count bound summed over a set of components.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupBound {
    pub members: Vec<usize>,
    pub op: BoundOp,
    pub value: u32,
}

/// All application-specific constraints that relate components.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Conflict { i: usize, j: usize },
    Colocation { i: usize, j: usize },
    RequireProvide(RequireProvide),
    ExclusiveDeployment { group: Vec<usize> },
    GroupBound(GroupBound),
}

impl Constraint {
    pub fn conflict(i: usize, j: usize) -> Self {
        Constraint::Conflict {
            i: i.min(j),
            j: i.max(j),
        }
    }

    pub fn colocation(i: usize, j: usize) -> Self {
        Constraint::Colocation {
            i: i.min(j),
            j: i.max(j),
        }
    }

    pub fn exclusive(group: impl IntoIterator<Item = usize>) -> Self {
        let group: BTreeSet<usize> = group.into_iter().collect();
        Constraint::ExclusiveDeployment {
            group: group.into_iter().collect(),
        }
    }

    pub fn group_bound(members: impl IntoIterator<Item = usize>, op: BoundOp, value: u32) -> Self {
        let members: BTreeSet<usize> = members.into_iter().collect();
        Constraint::GroupBound(GroupBound {
            members: members.into_iter().collect(),
            op,
            value,
        })
    }

    /// Component ids mentioned by the constraint.
    pub fn components(&self) -> Vec<usize> {
        match self {
            Constraint::Conflict { i, j } | Constraint::Colocation { i, j } => vec![*i, *j],
            Constraint::RequireProvide(rp) => vec![rp.i, rp.j],
            Constraint::ExclusiveDeployment { group } => group.clone(),
            Constraint::GroupBound(gb) => gb.members.clone(),
        }
    }
}

/// The application side of a deployment problem: everything except the
/// offer catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Application {
    #[serde(default)]
    pub name: String,
    pub components: Vec<Component>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    pub vm_budget: usize,
}

impl Application {
    /// Checks ids and constraint references, normalizing pair order.
    pub fn validated(mut self) -> Result<Self> {
        let n = self.components.len();
        if n == 0 {
            return Err(Error::InvalidProblem("no components".into()));
        }
        if self.vm_budget == 0 {
            return Err(Error::InvalidProblem("vm_budget must be at least 1".into()));
        }
        for (idx, c) in self.components.iter().enumerate() {
            if c.id != idx + 1 {
                return Err(Error::InvalidProblem(format!(
                    "component #{} has id {}, expected ids 1..N in order",
                    idx + 1,
                    c.id
                )));
            }
            if let Some(b) = c.bound {
                if b.value < 1 {
                    return Err(Error::InvalidProblem(format!(
                        "bound on component {} must be at least 1",
                        c.id
                    )));
                }
            }
        }
        let in_range = |id: usize| (1..=n).contains(&id);
        for c in &mut self.constraints {
            for id in c.components() {
                if !in_range(id) {
                    return Err(Error::InvalidProblem(format!(
                        "constraint {c:?} references unknown component {id}"
                    )));
                }
            }
            match c {
                Constraint::Conflict { i, j } | Constraint::Colocation { i, j } => {
                    if i == j {
                        return Err(Error::InvalidProblem(format!(
                            "pair constraint on component {i} with itself"
                        )));
                    }
                    if i > j {
                        std::mem::swap(i, j);
                    }
                }
                Constraint::RequireProvide(rp) => {
                    if rp.i == rp.j || rp.n == 0 {
                        return Err(Error::InvalidProblem(format!("bad require-provide {rp:?}")));
                    }
                    if rp.form == RequireProvideForm::Ratio && rp.m == 0 {
                        return Err(Error::InvalidProblem(format!("ratio form needs m >= 1: {rp:?}")));
                    }
                }
                Constraint::ExclusiveDeployment { group } => {
                    group.sort_unstable();
                    group.dedup();
                    if group.len() < 2 {
                        return Err(Error::InvalidProblem(
                            "exclusive deployment group needs at least two members".into(),
                        ));
                    }
                }
                Constraint::GroupBound(gb) => {
                    gb.members.sort_unstable();
                    gb.members.dedup();
                    if gb.members.is_empty() {
                        return Err(Error::InvalidProblem("empty group bound".into()));
                    }
                }
            }
        }
        Ok(self)
    }

    pub fn component_by_name(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Sum of per-component minimum instance counts: a lower bound on the
    /// number of VM slots worth offering to the solver. Advisory only.
    pub fn suggested_vm_budget(&self) -> usize {
        let n = self.components.len();
        let exclusive: BTreeSet<usize> = self
            .constraints
            .iter()
            .filter_map(|c| match c {
                Constraint::ExclusiveDeployment { group } => Some(group.iter().copied()),
                _ => None,
            })
            .flatten()
            .collect();
        let mins: Vec<u64> = self
            .components
            .iter()
            .map(|c| match c.bound {
                Some(Bound {
                    kind: BoundKind::Lower | BoundKind::Equal,
                    value,
                }) => value as u64,
                _ => 1,
            })
            .collect();
        let mut total: u64 = (1..=n)
            .filter(|id| !exclusive.contains(id))
            .map(|id| mins[id - 1])
            .sum();
        for c in &self.constraints {
            match c {
                Constraint::ExclusiveDeployment { group } => {
                    total += group.iter().map(|&id| mins[id - 1]).min().unwrap_or(0);
                }
                Constraint::GroupBound(gb) if gb.members.len() > 1 && gb.op != BoundOp::Le => {
                    let have: u64 = gb.members.iter().map(|&id| mins[id - 1]).sum();
                    total += (gb.value as u64).saturating_sub(have);
                }
                _ => {}
            }
        }
        total.max(1) as usize
    }
}

/// A complete COP instance: application plus offer catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentProblem {
    pub app: Application,
    pub offers: Vec<VmOffer>,
}

impl DeploymentProblem {
    pub fn new(app: Application, offers: Vec<VmOffer>) -> Result<Self> {
        let app = app.validated()?;
        if offers.is_empty() {
            return Err(Error::InvalidProblem("empty offer catalog".into()));
        }
        let mut seen = BTreeSet::new();
        for o in &offers {
            if o.id == 0 || !seen.insert(o.id) {
                return Err(Error::InvalidProblem(format!(
                    "offer ids must be unique and >= 1 (got {})",
                    o.id
                )));
            }
            if o.price == Price::ZERO {
                return Err(Error::InvalidProblem(format!("offer {} has zero price", o.id)));
            }
            if o.spec.as_array().contains(&0) {
                return Err(Error::InvalidProblem(format!("offer {} has a zero spec entry", o.id)));
            }
        }
        Ok(DeploymentProblem { app, offers })
    }

    /// N
    pub fn n_components(&self) -> usize {
        self.app.components.len()
    }

    /// M
    pub fn n_vms(&self) -> usize {
        self.app.vm_budget
    }

    /// O
    pub fn n_offers(&self) -> usize {
        self.offers.len()
    }

    pub fn offer(&self, id: u32) -> Option<&VmOffer> {
        self.offers.iter().find(|o| o.id == id)
    }

    pub fn component(&self, id: usize) -> &Component {
        &self.app.components[id - 1]
    }

    /// Ids of components in conflict with `id`.
    pub fn conflicts_of(&self, id: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .app
            .constraints
            .iter()
            .filter_map(|c| match *c {
                Constraint::Conflict { i, j } if i == id => Some(j),
                Constraint::Conflict { i, j } if j == id => Some(i),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Components belonging to some exclusive-deployment group.
    pub fn exclusive_members(&self) -> BTreeSet<usize> {
        self.app
            .constraints
            .iter()
            .filter_map(|c| match c {
                Constraint::ExclusiveDeployment { group } => Some(group.iter().copied()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Every instance-count bound, with per-component bounds lifted to
    /// singleton groups.
    pub fn all_group_bounds(&self) -> Vec<GroupBound> {
        let mut out: Vec<GroupBound> = self
            .app
            .components
            .iter()
            .filter_map(|c| {
                c.bound.map(|b| GroupBound {
                    members: vec![c.id],
                    op: b.kind.op(),
                    value: b.value,
                })
            })
            .collect();
        out.extend(self.app.constraints.iter().filter_map(|c| match c {
            Constraint::GroupBound(gb) => Some(gb.clone()),
            _ => None,
        }));
        out
    }

    pub fn with_offers(&self, offers: Vec<VmOffer>) -> Result<Self> {
        DeploymentProblem::new(self.app.clone(), offers)
    }
}

/// An assignment of components to VM slots with the chosen offer per slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Solution {
    /// N x M, `a[i][k] == 1` iff component `i+1` runs on VM `k+1`.
    pub a: Vec<Vec<u8>>,
    /// Offer id per VM slot, 0 when unleased.
    pub t: Vec<u32>,
    /// Occupancy per VM slot.
    pub v: Vec<u8>,
    pub price_total: Price,
}

impl Solution {
    /// Derives occupancy and price from `a` and `t`. Unknown offer ids
    /// contribute nothing to the price; `validate` reports them.
    pub fn from_assignment(problem: &DeploymentProblem, a: Vec<Vec<u8>>, t: Vec<u32>) -> Self {
        let v = t.iter().map(|&o| u8::from(o != 0)).collect();
        let price_total = t.iter().filter_map(|&o| problem.offer(o).map(|off| off.price)).sum();
        Solution { a, t, v, price_total }
    }

    pub fn n_components(&self) -> usize {
        self.a.len()
    }

    pub fn n_vms(&self) -> usize {
        self.t.len()
    }

    pub fn instances(&self, component: usize) -> u64 {
        self.a[component - 1].iter().map(|&x| x as u64).sum()
    }

    pub fn vm_load(&self, vm: usize) -> u64 {
        self.a.iter().map(|row| row[vm] as u64).sum()
    }

    /// Relabels VM slots into a canonical order: leased slots first, sorted
    /// by column contents (slots hosting component 1 first, and so on) then
    /// by offer id; unleased slots last. Ordering by contents rather than by
    /// offer keeps each slot's role stable across catalogs, which is what
    /// makes slot-indexed labels learnable. The relabelling preserves
    /// validity since constraints are symmetric in the slots.
    pub fn canonicalize(&self) -> Solution {
        let m = self.n_vms();
        let column = |k: usize| -> Vec<u8> { self.a.iter().map(|row| row[k]).collect() };
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| {
            let kx = (self.t[x] == 0, std::cmp::Reverse(column(x)), self.t[x]);
            let ky = (self.t[y] == 0, std::cmp::Reverse(column(y)), self.t[y]);
            kx.cmp(&ky)
        });
        Solution {
            a: self
                .a
                .iter()
                .map(|row| order.iter().map(|&k| row[k]).collect())
                .collect(),
            t: order.iter().map(|&k| self.t[k]).collect(),
            v: order.iter().map(|&k| self.v[k]).collect(),
            price_total: self.price_total,
        }
    }
}

/// A single violated constraint, naming its family and indices (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Violation {
    NonBinary {
        component: usize,
        vm: usize,
    },
    BasicAllocation {
        component: usize,
    },
    Occupancy {
        vm: usize,
    },
    Link {
        vm: usize,
        detail: String,
    },
    Capacity {
        vm: usize,
        resource: Resource,
        load: u64,
        capacity: u64,
    },
    Conflict {
        i: usize,
        j: usize,
        vm: usize,
    },
    Colocation {
        i: usize,
        j: usize,
        vm: usize,
    },
    ExclusiveDeployment {
        group: Vec<usize>,
        deployed: usize,
    },
    RequireProvide {
        i: usize,
        j: usize,
        count_i: u64,
        count_j: u64,
    },
    FullDeployment {
        component: usize,
        vm: usize,
    },
    GroupBound {
        members: Vec<usize>,
        op: BoundOp,
        value: u32,
        actual: u64,
    },
    Price {
        recorded: Price,
        computed: Price,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonBinary { component, vm } => {
                write!(f, "NonBinary(a[{component}][{vm}])")
            }
            Violation::BasicAllocation { component } => write!(f, "BasicAllocation({component})"),
            Violation::Occupancy { vm } => write!(f, "Occupancy(k={vm})"),
            Violation::Link { vm, detail } => write!(f, "Link(k={vm}: {detail})"),
            Violation::Capacity {
                vm,
                resource,
                load,
                capacity,
            } => write!(f, "Capacity(k={vm}, {resource}: {load} > {capacity})"),
            Violation::Conflict { i, j, vm } => write!(f, "Conflict({i},{j},k={vm})"),
            Violation::Colocation { i, j, vm } => write!(f, "Colocation({i},{j},k={vm})"),
            Violation::ExclusiveDeployment { group, deployed } => {
                write!(f, "ExclusiveDeployment({group:?}: {deployed} deployed)")
            }
            Violation::RequireProvide { i, j, count_i, count_j } => {
                write!(f, "RequireProvide({i}->{j}: {count_i} vs {count_j})")
            }
            Violation::FullDeployment { component, vm } => {
                write!(f, "FullDeployment({component},k={vm})")
            }
            Violation::GroupBound {
                members,
                op,
                value,
                actual,
            } => write!(f, "GroupBound({members:?} {op} {value}, actual {actual})"),
            Violation::Price { recorded, computed } => {
                write!(f, "Price(recorded {recorded}, computed {computed})")
            }
        }
    }
}

/// Whether a require-provide constraint is active: members of an exclusive
/// group only impose their require-provide relations while deployed.
pub(crate) fn require_provide_active(
    rp: &RequireProvide,
    exclusive: &BTreeSet<usize>,
    deployed: impl Fn(usize) -> bool,
) -> bool {
    [rp.i, rp.j].iter().all(|&id| !exclusive.contains(&id) || deployed(id))
}

/// Checks `sol` against every general and application-specific constraint.
/// Returns the (possibly empty) list of violations; a shape mismatch is a
/// structural error instead.
pub fn validate(problem: &DeploymentProblem, sol: &Solution) -> Result<Vec<Violation>> {
    let n = problem.n_components();
    let m = problem.n_vms();
    if sol.a.len() != n || sol.a.iter().any(|row| row.len() != m) {
        return Err(Error::Dimension(format!("assignment matrix must be {n}x{m}")));
    }
    if sol.t.len() != m || sol.v.len() != m {
        return Err(Error::Dimension(format!(
            "type and occupancy vectors must have length {m}"
        )));
    }

    let mut out = Vec::new();
    for (i, row) in sol.a.iter().enumerate() {
        for (k, &x) in row.iter().enumerate() {
            if x > 1 {
                out.push(Violation::NonBinary {
                    component: i + 1,
                    vm: k + 1,
                });
            }
        }
    }
    let a = |i: usize, k: usize| sol.a[i - 1][k - 1] == 1;
    let exclusive = problem.exclusive_members();

    // Basic allocation.
    for i in 1..=n {
        if !exclusive.contains(&i) && sol.instances(i) == 0 {
            out.push(Violation::BasicAllocation { component: i });
        }
    }

    // Occupancy, link, capacity.
    let mut computed = Price::ZERO;
    for k in 1..=m {
        let load = sol.vm_load(k - 1);
        let occupied = sol.v[k - 1] == 1;
        if sol.v[k - 1] > 1 || (load >= 1) != occupied {
            out.push(Violation::Occupancy { vm: k });
        }
        let t = sol.t[k - 1];
        if occupied != (t != 0) {
            out.push(Violation::Link {
                vm: k,
                detail: format!("v={} but t={t}", sol.v[k - 1]),
            });
        }
        if t == 0 {
            if load > 0 {
                out.push(Violation::Link {
                    vm: k,
                    detail: "hosts components but no offer".into(),
                });
            }
            continue;
        }
        let Some(offer) = problem.offer(t) else {
            out.push(Violation::Link {
                vm: k,
                detail: format!("unknown offer id {t}"),
            });
            continue;
        };
        if load == 0 {
            out.push(Violation::Link {
                vm: k,
                detail: "leased but empty".into(),
            });
        }
        computed = computed + offer.price;
        for r in Resource::ALL {
            let used: u64 = (1..=n)
                .filter(|&i| a(i, k))
                .map(|i| problem.component(i).requirements.get(r))
                .sum();
            if used > offer.spec.get(r) {
                out.push(Violation::Capacity {
                    vm: k,
                    resource: r,
                    load: used,
                    capacity: offer.spec.get(r),
                });
            }
        }
    }
    if computed != sol.price_total {
        out.push(Violation::Price {
            recorded: sol.price_total,
            computed,
        });
    }

    // Application-specific constraints.
    for c in &problem.app.constraints {
        match c {
            Constraint::Conflict { i, j } => {
                for k in 1..=m {
                    if a(*i, k) && a(*j, k) {
                        out.push(Violation::Conflict { i: *i, j: *j, vm: k });
                    }
                }
            }
            Constraint::Colocation { i, j } => {
                for k in 1..=m {
                    if a(*i, k) != a(*j, k) {
                        out.push(Violation::Colocation { i: *i, j: *j, vm: k });
                    }
                }
            }
            Constraint::ExclusiveDeployment { group } => {
                let deployed = group.iter().filter(|&&id| sol.instances(id) > 0).count();
                if deployed != 1 {
                    out.push(Violation::ExclusiveDeployment {
                        group: group.clone(),
                        deployed,
                    });
                }
            }
            Constraint::RequireProvide(rp) => {
                if !require_provide_active(rp, &exclusive, |id| sol.instances(id) > 0) {
                    continue;
                }
                let (ci, cj) = (sol.instances(rp.i), sol.instances(rp.j));
                if !rp.holds(ci, cj) {
                    out.push(Violation::RequireProvide {
                        i: rp.i,
                        j: rp.j,
                        count_i: ci,
                        count_j: cj,
                    });
                }
            }
            Constraint::GroupBound(_) => {}
        }
    }

    for gb in problem.all_group_bounds() {
        let actual: u64 = gb.members.iter().map(|&id| sol.instances(id)).sum();
        if !gb.op.holds(actual, gb.value as u64) {
            out.push(Violation::GroupBound {
                members: gb.members.clone(),
                op: gb.op,
                value: gb.value,
                actual,
            });
        }
    }

    // Full deployment: present on every occupied VM unless a conflicting
    // component is there.
    for comp in problem.app.components.iter().filter(|c| c.full_deployment) {
        let conflicts = problem.conflicts_of(comp.id);
        for k in 1..=m {
            if sol.v[k - 1] != 1 || a(comp.id, k) {
                continue;
            }
            if !conflicts.iter().any(|&j| a(j, k)) {
                out.push(Violation::FullDeployment {
                    component: comp.id,
                    vm: k,
                });
            }
        }
    }

    Ok(out)
}
