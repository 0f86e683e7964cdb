//! Compiles a [`DeploymentProblem`] into an SMT-LIB v2 optimization script.
//!
//! Layout of the emitted script, one directive per line:
//!
//! 1. lexicographic priority option
//! 2. declarations: `a<i><k>` (Int), `t<k>` (Int), `v<k>` (Int),
//!    `PriceProv<k>` (Real), `ProcProv<k>`/`MemProv<k>`/`StorageProv<k>`
//!    (Int), then `deployed<i>` (Bool) for exclusive-group members
//! 3. hard assertions, general constraints first
//! 4. `assert-soft` lines in the order given
//! 5. `(minimize (+ 0 PriceProv1 ... PriceProvM))`, `check-sat`,
//!    `get-model`, `get-objectives`

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Constraint, DeploymentProblem, RequireProvideForm, Resource, VmOffer, RESOURCES};

/// What a soft constraint asks the solver to prefer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SoftTerm {
    /// `a_ik = value` (1-based component and VM).
    Assign { component: usize, vm: usize, value: u8 },
    /// VM `vm` takes the spec and price of the offer at 0-based position
    /// `offer` in the problem's catalog.
    VmOffer { vm: usize, offer: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SoftConstraint {
    pub term: SoftTerm,
    pub weight: u32,
}

impl SoftConstraint {
    pub fn assign(component: usize, vm: usize, value: u8) -> Self {
        SoftConstraint {
            term: SoftTerm::Assign { component, vm, value },
            weight: 1,
        }
    }

    pub fn vm_offer(vm: usize, offer: usize) -> Self {
        SoftConstraint {
            term: SoftTerm::VmOffer { vm, offer },
            weight: 1,
        }
    }
}

/// Names of every declared variable, keyed by problem indices (0-based
/// positions; names themselves are 1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarIndex {
    pub assign: Vec<Vec<String>>,
    pub type_var: Vec<String>,
    pub occupancy: Vec<String>,
    pub price: Vec<String>,
    pub spec: Vec<[String; RESOURCES]>,
    /// Heaviside indicators keyed by 1-based component id.
    pub deployed: BTreeMap<usize, String>,
}

impl VarIndex {
    pub(crate) fn new(n: usize, m: usize) -> Self {
        // Compact `a12` names while both indices are single digits; the
        // separator keeps larger indices unambiguous.
        let compact = n < 10 && m < 10;
        let assign = (1..=n)
            .map(|i| {
                (1..=m)
                    .map(|k| {
                        if compact {
                            format!("a{i}{k}")
                        } else {
                            format!("a{i}_{k}")
                        }
                    })
                    .collect()
            })
            .collect();
        VarIndex {
            assign,
            type_var: (1..=m).map(|k| format!("t{k}")).collect(),
            occupancy: (1..=m).map(|k| format!("v{k}")).collect(),
            price: (1..=m).map(|k| format!("PriceProv{k}")).collect(),
            spec: (1..=m)
                .map(|k| [format!("ProcProv{k}"), format!("MemProv{k}"), format!("StorageProv{k}")])
                .collect(),
            deployed: BTreeMap::new(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.assign.len()
    }

    pub fn n_vms(&self) -> usize {
        self.type_var.len()
    }

    /// All declared names in declaration order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.assign
            .iter()
            .flatten()
            .chain(&self.type_var)
            .chain(&self.occupancy)
            .chain(&self.price)
            .chain(self.spec.iter().flatten())
            .chain(self.deployed.values())
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An emitted script plus what the driver needs to read a model back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmtScript {
    pub text: String,
    pub var_index: VarIndex,
    pub offers: Vec<VmOffer>,
    pub n_soft: usize,
}

/// Declaration and defining assertion of the deployment indicator
/// `H(sum_k a_ik)` for one component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeavisideIndicator {
    pub name: String,
    pub declaration: String,
    pub definition: String,
}

pub fn heaviside_indicator(problem: &DeploymentProblem, component: usize) -> Result<HeavisideIndicator> {
    if !(1..=problem.n_components()).contains(&component) {
        return Err(Error::InvalidArgument(format!("component {component} not in problem")));
    }
    let vars = VarIndex::new(problem.n_components(), problem.n_vms());
    Ok(indicator(&vars, component))
}

fn indicator(vars: &VarIndex, component: usize) -> HeavisideIndicator {
    let name = format!("deployed{component}");
    let row: Vec<&str> = vars.assign[component - 1].iter().map(String::as_str).collect();
    HeavisideIndicator {
        declaration: format!("(declare-fun {name} () Bool)"),
        definition: format!("(assert (= {name} (>= {} 1)))", sum(&row)),
        name,
    }
}

fn sum<S: AsRef<str>>(terms: &[S]) -> String {
    match terms {
        [] => "0".to_string(),
        [one] => one.as_ref().to_string(),
        many => {
            let mut out = String::from("(+");
            for t in many {
                out.push(' ');
                out.push_str(t.as_ref());
            }
            out.push(')');
            out
        }
    }
}

fn scaled(coef: u64, term: &str) -> String {
    if coef == 1 {
        term.to_string()
    } else {
        format!("(* {coef} {term})")
    }
}

fn check_soft(problem: &DeploymentProblem, soft: &SoftConstraint) -> Result<()> {
    let (n, m, o) = (problem.n_components(), problem.n_vms(), problem.n_offers());
    let ok = match soft.term {
        SoftTerm::Assign { component, vm, value } => {
            (1..=n).contains(&component) && (1..=m).contains(&vm) && value <= 1
        }
        SoftTerm::VmOffer { vm, offer } => (1..=m).contains(&vm) && offer < o,
    };
    if !ok || soft.weight == 0 {
        return Err(Error::SoftConstraint(format!("{soft:?} outside N={n}, M={m}, O={o}")));
    }
    Ok(())
}

/// Renders one soft constraint as an `assert-soft` line.
pub fn soft_line(problem: &DeploymentProblem, vars: &VarIndex, soft: &SoftConstraint) -> Result<String> {
    check_soft(problem, soft)?;
    let body = match soft.term {
        SoftTerm::Assign { component, vm, value } => format!("(= {} {value})", vars.assign[component - 1][vm - 1]),
        SoftTerm::VmOffer { vm, offer } => {
            let off = &problem.offers[offer];
            let mut s = format!("(and (= {} {})", vars.price[vm - 1], off.price);
            for (r, name) in Resource::ALL.iter().zip(&vars.spec[vm - 1]) {
                write!(s, " (= {name} {})", off.spec.get(*r)).expect("string write");
            }
            s.push(')');
            s
        }
    };
    Ok(if soft.weight == 1 {
        format!("(assert-soft {body})")
    } else {
        format!("(assert-soft {body} :weight {})", soft.weight)
    })
}

/// Emits the full optimization script.
pub fn encode(problem: &DeploymentProblem, soft: &[SoftConstraint]) -> Result<SmtScript> {
    let n = problem.n_components();
    let m = problem.n_vms();
    let mut vars = VarIndex::new(n, m);
    let exclusive = problem.exclusive_members();
    let indicators: Vec<HeavisideIndicator> = exclusive.iter().map(|&id| indicator(&vars, id)).collect();
    for ind in &indicators {
        let id = ind.name.trim_start_matches("deployed").parse().expect("indicator id");
        vars.deployed.insert(id, ind.name.clone());
    }
    let soft_lines = soft
        .iter()
        .map(|s| soft_line(problem, &vars, s))
        .collect::<Result<Vec<_>>>()?;

    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    let a = |i: usize, k: usize| vars.assign[i - 1][k - 1].as_str();
    let row = |i: usize| -> Vec<&str> { (1..=m).map(|k| a(i, k)).collect() };
    let column = |k: usize| -> Vec<&str> { (1..=n).map(|i| a(i, k)).collect() };

    line(format!(
        "; deployment plan for `{}`: N={n} M={m} O={}",
        problem.app.name,
        problem.n_offers()
    ));
    line("(set-option :opt.priority lex)".into());
    line("; declaration of the variables".into());
    for name in vars.assign.iter().flatten() {
        line(format!("(declare-fun {name} () Int)"));
    }
    for name in vars.type_var.iter().chain(&vars.occupancy) {
        line(format!("(declare-fun {name} () Int)"));
    }
    for name in &vars.price {
        line(format!("(declare-fun {name} () Real)"));
    }
    for name in vars.spec.iter().flatten() {
        line(format!("(declare-fun {name} () Int)"));
    }
    for ind in &indicators {
        line(ind.declaration.clone());
    }

    line("; general constraints".into());
    for name in vars.assign.iter().flatten().chain(&vars.occupancy) {
        line(format!("(assert (or (= {name} 0) (= {name} 1)))"));
    }
    for k in 1..=m {
        let t = &vars.type_var[k - 1];
        let mut domain = format!("(assert (or (= {t} 0)");
        for o in &problem.offers {
            write!(domain, " (= {t} {})", o.id).expect("string write");
        }
        domain.push_str("))");
        line(domain);
    }
    for i in 1..=n {
        if !exclusive.contains(&i) {
            line(format!("(assert (>= {} 1))", sum(&row(i))));
        }
    }
    for k in 1..=m {
        let (v, t) = (&vars.occupancy[k - 1], &vars.type_var[k - 1]);
        line(format!("(assert (= (>= {} 1) (= {v} 1)))", sum(&column(k))));
        line(format!("(assert (= (= {v} 1) (not (= {t} 0))))"));
        let spec = &vars.spec[k - 1];
        let price = &vars.price[k - 1];
        line(format!(
            "(assert (=> (= {t} 0) (and (= {price} 0.0) (= {} 0) (= {} 0) (= {} 0))))",
            spec[0], spec[1], spec[2]
        ));
        for o in &problem.offers {
            line(format!(
                "(assert (=> (= {t} {}) (and (= {price} {}) (= {} {}) (= {} {}) (= {} {}))))",
                o.id, o.price, spec[0], o.spec.cpu, spec[1], o.spec.mem, spec[2], o.spec.sto
            ));
        }
        for (r, cap) in Resource::ALL.iter().zip(spec) {
            let load: Vec<String> = (1..=n)
                .filter_map(|i| {
                    let req = problem.component(i).requirements.get(*r);
                    (req > 0).then(|| scaled(req, a(i, k)))
                })
                .collect();
            line(format!("(assert (<= {} {cap}))", sum(&load)));
        }
    }

    line("; application-specific constraints".into());
    for c in &problem.app.constraints {
        match c {
            Constraint::Conflict { i, j } => {
                for k in 1..=m {
                    line(format!("(assert (<= (+ {} {}) 1))", a(*i, k), a(*j, k)));
                }
            }
            Constraint::Colocation { i, j } => {
                for k in 1..=m {
                    line(format!("(assert (= {} {}))", a(*i, k), a(*j, k)));
                }
            }
            Constraint::ExclusiveDeployment { group } => {
                let terms: Vec<String> = group
                    .iter()
                    .map(|id| format!("(ite {} 1 0)", vars.deployed[id]))
                    .collect();
                line(format!("(assert (= {} 1))", sum(&terms)));
            }
            Constraint::RequireProvide(rp) => {
                let (si, sj) = (sum(&row(rp.i)), sum(&row(rp.j)));
                let body = match rp.form {
                    RequireProvideForm::Ratio => {
                        format!("(<= {} {})", scaled(rp.n as u64, &si), scaled(rp.m as u64, &sj))
                    }
                    RequireProvideForm::Window => {
                        let diff = format!("(- {} {si})", scaled(rp.n as u64, &sj));
                        format!("(and (<= 0 {diff}) (< {diff} {}))", rp.n)
                    }
                };
                let guards: Vec<&str> = [rp.i, rp.j]
                    .iter()
                    .filter_map(|id| vars.deployed.get(id).map(String::as_str))
                    .collect();
                match guards.as_slice() {
                    [] => line(format!("(assert {body})")),
                    [g] => line(format!("(assert (=> {g} {body}))")),
                    gs => line(format!("(assert (=> (and {}) {body}))", gs.join(" "))),
                }
            }
            Constraint::GroupBound(_) => {}
        }
    }
    for ind in &indicators {
        line(ind.definition.clone());
    }
    for comp in problem.app.components.iter().filter(|c| c.full_deployment) {
        let conflicts = problem.conflicts_of(comp.id);
        for k in 1..=m {
            let v = &vars.occupancy[k - 1];
            let here = format!("(= {} 1)", a(comp.id, k));
            if conflicts.is_empty() {
                line(format!("(assert (=> (= {v} 1) {here}))"));
            } else {
                let others: Vec<&str> = conflicts.iter().map(|&j| a(j, k)).collect();
                line(format!("(assert (=> (= {v} 1) (or {here} (>= {} 1))))", sum(&others)));
            }
        }
    }
    for gb in problem.all_group_bounds() {
        let terms: Vec<&str> = gb.members.iter().flat_map(|&id| row(id)).collect();
        line(format!("(assert ({} {} {}))", gb.op.smt(), sum(&terms), gb.value));
    }

    line("; soft constraints".into());
    for s in &soft_lines {
        line(s.clone());
    }
    line("; optimization criteria".into());
    let mut objective = String::from("(minimize (+ 0");
    for p in &vars.price {
        objective.push(' ');
        objective.push_str(p);
    }
    objective.push_str("))");
    line(objective);
    line("(check-sat)".into());
    line("(get-model)".into());
    line("(get-objectives)".into());

    Ok(SmtScript {
        text: out,
        var_index: vars,
        offers: problem.offers.clone(),
        n_soft: soft.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::model::{Application, Component, HardwareVector};
    use crate::price::Price;
    use crate::sexpr::{parse_all, SExpr};

    fn tiny(constraints: Vec<Constraint>, n: usize, m: usize) -> DeploymentProblem {
        let app = Application {
            name: "tiny".into(),
            components: (1..=n)
                .map(|i| Component::new(i, format!("C{i}"), HardwareVector::new(1, 1, 1)))
                .collect(),
            constraints,
            vm_budget: m,
        };
        DeploymentProblem::new(app, vec![VmOffer::new(1, 2, 2, 2, Price::from_millis(1500))]).unwrap()
    }

    fn asserts(text: &str) -> Vec<SExpr> {
        parse_all(text)
            .unwrap()
            .into_iter()
            .filter(|e| e.head() == Some("assert"))
            .collect()
    }

    #[test]
    fn smallest_instance() {
        let p = tiny(vec![], 1, 1);
        let script = encode(&p, &[]).unwrap();
        let exprs = parse_all(&script.text).unwrap();
        let a_decls: Vec<_> = exprs
            .iter()
            .filter(|e| e.head() == Some("declare-fun"))
            .filter(|e| e.list().unwrap()[1].atom().unwrap().starts_with('a'))
            .collect();
        assert_eq!(a_decls.len(), 1);
        assert!(asserts(&script.text)
            .iter()
            .any(|e| e.to_string() == "(assert (>= a11 1))"));
        assert!(script
            .text
            .ends_with("(minimize (+ 0 PriceProv1))\n(check-sat)\n(get-model)\n(get-objectives)\n"));
    }

    #[test]
    fn conflict_template() {
        let p = tiny(vec![Constraint::conflict(1, 2)], 2, 2);
        let script = encode(&p, &[]).unwrap();
        let all: Vec<String> = asserts(&script.text).iter().map(|e| e.to_string()).collect();
        assert!(all.contains(&"(assert (<= (+ a11 a21) 1))".to_string()));
        assert!(all.contains(&"(assert (<= (+ a12 a22) 1))".to_string()));
    }

    #[test]
    fn declarations_match_index() {
        let p = DeploymentProblem::new(cases::wordpress(3), cases::catalog_cloud20()).unwrap();
        let script = encode(&p, &[SoftConstraint::assign(1, 1, 1)]).unwrap();
        let declared: Vec<String> = parse_all(&script.text)
            .unwrap()
            .iter()
            .filter(|e| e.head() == Some("declare-fun"))
            .map(|e| e.list().unwrap()[1].atom().unwrap().to_string())
            .collect();
        let indexed: Vec<&str> = script.var_index.names().collect();
        assert_eq!(declared, indexed);
        assert_eq!(script.var_index.deployed.len(), 2);
    }

    #[test]
    fn ordering_soft_before_minimize() {
        let p = tiny(vec![], 2, 2);
        let script = encode(&p, &[SoftConstraint::assign(1, 2, 1), SoftConstraint::vm_offer(2, 0)]).unwrap();
        let heads: Vec<String> = parse_all(&script.text)
            .unwrap()
            .iter()
            .map(|e| e.head().unwrap_or("").to_string())
            .collect();
        let last_assert = heads.iter().rposition(|h| h == "assert").unwrap();
        let first_soft = heads.iter().position(|h| h == "assert-soft").unwrap();
        let last_soft = heads.iter().rposition(|h| h == "assert-soft").unwrap();
        let minimize = heads.iter().position(|h| h == "minimize").unwrap();
        assert!(last_assert < first_soft && last_soft < minimize);
    }

    #[test]
    fn out_of_range_soft_rejected() {
        let p = tiny(vec![], 2, 2);
        for bad in [
            SoftConstraint::assign(3, 1, 1),
            SoftConstraint::assign(1, 3, 1),
            SoftConstraint::assign(1, 1, 2),
            SoftConstraint::vm_offer(1, 1),
            SoftConstraint::vm_offer(0, 0),
        ] {
            assert!(matches!(encode(&p, &[bad]), Err(Error::SoftConstraint(_))));
        }
    }

    #[test]
    fn weight_suffix_only_when_not_default() {
        let p = tiny(vec![], 1, 1);
        let vars = VarIndex::new(1, 1);
        let mut s = SoftConstraint::assign(1, 1, 1);
        assert_eq!(soft_line(&p, &vars, &s).unwrap(), "(assert-soft (= a11 1))");
        s.weight = 3;
        assert_eq!(soft_line(&p, &vars, &s).unwrap(), "(assert-soft (= a11 1) :weight 3)");
    }

    #[test]
    fn indicator_for_exclusive_group() {
        let p = DeploymentProblem::new(cases::wordpress(3), cases::catalog_cloud20()).unwrap();
        let ind = heaviside_indicator(&p, 3).unwrap();
        assert_eq!(ind.declaration, "(declare-fun deployed3 () Bool)");
        assert!(ind.definition.starts_with("(assert (= deployed3 (>= (+ a31 a32"));
        let script = encode(&p, &[]).unwrap();
        assert!(script
            .text
            .contains("(assert (= (+ (ite deployed3 1 0) (ite deployed4 1 0)) 1))"));
        assert!(heaviside_indicator(&p, 9).is_err());
    }

    #[test]
    fn deterministic() {
        let p = DeploymentProblem::new(cases::oryx2(), cases::catalog_cloud20()).unwrap();
        assert_eq!(encode(&p, &[]).unwrap().text, encode(&p, &[]).unwrap().text);
    }
}
