#![allow(dead_code)]

use neurodeploy::gnn::{GraphInput, ModelConfig};
use neurodeploy::hetgraph::{normalize_features, HetGraph};
use neurodeploy::*;

/// Three components on two slots: 1 conflicts with 2, 3 needs one 1 per
/// instance.
pub fn toy_problem() -> DeploymentProblem {
    let app = Application {
        name: "toy".into(),
        components: vec![
            Component::new(1, "web", HardwareVector::new(2, 1024, 100)),
            Component::new(2, "db", HardwareVector::new(1, 2048, 400)).with_bound(BoundKind::Lower, 1),
            Component::new(3, "agent", HardwareVector::new(1, 256, 10)).with_full_deployment(),
        ],
        constraints: vec![
            Constraint::conflict(1, 2),
            Constraint::RequireProvide(RequireProvide::ratio(3, 1, 1, 2)),
        ],
        vm_budget: 2,
    };
    let offers = vec![
        VmOffer::new(1, 2, 2048, 500, Price::from_millis(110)),
        VmOffer::new(2, 4, 4096, 1000, Price::from_millis(190)),
    ];
    DeploymentProblem::new(app, offers).unwrap()
}

/// The toy instance, labeled with its optimum and laid out for `config`.
pub fn toy_input(config: &ModelConfig) -> GraphInput {
    let p = toy_problem();
    let sol = brute_force(&p, OracleCaps::default())
        .unwrap()
        .expect("toy is feasible");
    let g = HetGraph::build(&p, Some(&sol)).unwrap();
    let (g, _) = normalize_features(&g, None).unwrap();
    GraphInput::new(&g, config).unwrap()
}

/// A small random instance: N <= 4, M <= 3, O <= 5 with a random mix of
/// every constraint kind. Roughly a third come out infeasible.
pub fn random_problem(rng: &mut impl rand::Rng) -> DeploymentProblem {
    const MEM: [u64; 4] = [512, 1024, 2048, 4096];
    const STO: [u64; 3] = [100, 500, 1000];
    loop {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=3);
        let o = rng.gen_range(1..=5);
        let components = (1..=n)
            .map(|i| {
                let req = HardwareVector::new(
                    rng.gen_range(1..=4),
                    MEM[rng.gen_range(0..MEM.len())],
                    STO[rng.gen_range(0..STO.len())],
                );
                let mut c = Component::new(i, format!("C{i}"), req);
                if rng.gen_bool(0.15) {
                    c = c.with_full_deployment();
                }
                if rng.gen_bool(0.3) {
                    let kind = [BoundKind::Upper, BoundKind::Lower, BoundKind::Equal][rng.gen_range(0..3)];
                    c = c.with_bound(kind, rng.gen_range(1..=2));
                }
                c
            })
            .collect();
        let mut constraints = Vec::new();
        for i in 1..=n {
            for j in i + 1..=n {
                let r: f64 = rng.gen();
                if r < 0.2 {
                    constraints.push(Constraint::conflict(i, j));
                } else if r < 0.3 {
                    constraints.push(Constraint::colocation(i, j));
                }
            }
        }
        if n >= 2 && rng.gen_bool(0.35) {
            let i = rng.gen_range(1..=n);
            let j = (i + rng.gen_range(0..n - 1)) % n + 1;
            let rp = if rng.gen_bool(0.5) {
                RequireProvide::ratio(i, j, rng.gen_range(1..=3), rng.gen_range(1..=3))
            } else {
                RequireProvide::window(i, j, rng.gen_range(1..=2))
            };
            constraints.push(Constraint::RequireProvide(rp));
        }
        if n >= 3 && rng.gen_bool(0.2) {
            constraints.push(Constraint::exclusive([1, rng.gen_range(2..=n)]));
        }
        if n >= 2 && rng.gen_bool(0.2) {
            let op = [BoundOp::Le, BoundOp::Ge, BoundOp::Eq][rng.gen_range(0..3)];
            constraints.push(Constraint::group_bound([1, 2], op, rng.gen_range(1..=3)));
        }
        let offers = (1..=o as u32)
            .map(|id| {
                let cpu = [1, 2, 4, 8][rng.gen_range(0..4)];
                VmOffer::new(
                    id,
                    cpu,
                    cpu * MEM[rng.gen_range(0..MEM.len())],
                    STO[rng.gen_range(0..STO.len())] * 2,
                    Price::from_millis(rng.gen_range(50..2000)),
                )
            })
            .collect();
        let app = Application {
            name: "random".into(),
            components,
            constraints,
            vm_budget: m,
        };
        if let Ok(p) = DeploymentProblem::new(app, offers) {
            return p;
        }
    }
}
