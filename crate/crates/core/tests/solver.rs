use std::time::Duration;

use neurodeploy::smt::{encode, solve, SolveStatus, SolverConfig};
use neurodeploy::*;

fn deadline() -> Duration {
    Duration::from_secs(120)
}

#[test]
fn single_component_picks_cheaper_offer() {
    let app = Application {
        name: "one".into(),
        components: vec![Component::new(1, "C1", HardwareVector::new(1, 1, 1))],
        constraints: vec![],
        vm_budget: 1,
    };
    let offers = vec![
        VmOffer::new(1, 2, 2, 2, "10.000".parse().unwrap()),
        VmOffer::new(2, 1, 1, 1, "5.000".parse().unwrap()),
    ];
    let p = DeploymentProblem::new(app, offers).unwrap();
    let out = solve(&encode(&p, &[]).unwrap(), deadline(), &SolverConfig::from_env()).unwrap();
    assert_eq!(out.status, SolveStatus::Sat, "{}", out.diagnostics);
    let sol = out.solution.unwrap();
    assert_eq!(sol.a, vec![vec![1]]);
    assert_eq!(sol.t, vec![2]);
    assert_eq!(out.objective_price, Some(Price::from_millis(5000)));
}

#[test]
fn oryx2_unsat_on_droplet_catalog() {
    let p = DeploymentProblem::new(case_study("oryx2").unwrap(), catalog_droplet27()).unwrap();
    let out = solve(&encode(&p, &[]).unwrap(), deadline(), &SolverConfig::from_env()).unwrap();
    assert_eq!(out.status, SolveStatus::Unsat);
    assert!(out.solution.is_none());
}

#[test]
fn tiny_deadline_times_out() {
    let p = DeploymentProblem::new(case_study("wordpress:4").unwrap(), catalog_cloud20()).unwrap();
    let out = solve(
        &encode(&p, &[]).unwrap(),
        Duration::from_millis(1),
        &SolverConfig::from_env(),
    )
    .unwrap();
    assert_eq!(out.status, SolveStatus::Timeout);
}

#[test]
fn case_studies_solve_to_valid_solutions() {
    for name in ["secure-web", "secure-billing", "oryx2", "wordpress"] {
        let p = DeploymentProblem::new(case_study(name).unwrap(), catalog_cloud20()).unwrap();
        let out = solve(&encode(&p, &[]).unwrap(), deadline(), &SolverConfig::from_env()).unwrap();
        assert_eq!(out.status, SolveStatus::Sat, "{name}: {}", out.diagnostics);
        let sol = out.solution.unwrap();
        assert_eq!(validate(&p, &sol).unwrap(), vec![], "{name}");
        assert_eq!(out.objective_price, Some(sol.price_total));
        eprintln!("{name}: {} in {:.2}s", sol.price_total, out.wall_time);
    }
}
