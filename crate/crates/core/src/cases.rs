//! Builders for the four reference applications and the offer catalogs used
//! throughout the tests and benchmarks.
//!
//! Hardware requirements and catalog entries are representative values; the
//! constraint structure is what matters for the solver and the learner.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Application, BoundKind, BoundOp, Component, Constraint, HardwareVector, RequireProvide, VmOffer};
use crate::price::Price;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseStudy {
    SecureWeb,
    SecureBilling,
    Oryx2,
    WordPress { min_instances: u32 },
}

impl CaseStudy {
    pub fn application(self) -> Application {
        match self {
            CaseStudy::SecureWeb => secure_web(),
            CaseStudy::SecureBilling => secure_billing(),
            CaseStudy::Oryx2 => oryx2(),
            CaseStudy::WordPress { min_instances } => wordpress(min_instances),
        }
    }
}

impl fmt::Display for CaseStudy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseStudy::SecureWeb => f.write_str("secure-web"),
            CaseStudy::SecureBilling => f.write_str("secure-billing"),
            CaseStudy::Oryx2 => f.write_str("oryx2"),
            CaseStudy::WordPress { min_instances } => write!(f, "wordpress:{min_instances}"),
        }
    }
}

impl FromStr for CaseStudy {
    type Err = Error;

    /// Accepts `secure-web`, `secure-billing`, `oryx2`, `wordpress` (three
    /// WordPress instances) and `wordpress:<n>` with `n >= 3`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "secure-web" | "securewebcontainer" | "secure-web-container" => Ok(CaseStudy::SecureWeb),
            "secure-billing" | "securebillingemail" | "secure-billing-email" => Ok(CaseStudy::SecureBilling),
            "oryx2" => Ok(CaseStudy::Oryx2),
            "wordpress" => Ok(CaseStudy::WordPress { min_instances: 3 }),
            other => {
                let n = other
                    .strip_prefix("wordpress:")
                    .or_else(|| other.strip_prefix("wordpress"))
                    .and_then(|n| n.parse::<u32>().ok())
                    .ok_or_else(|| Error::UnknownCaseStudy(s.to_string()))?;
                if n < 3 {
                    return Err(Error::InvalidArgument(format!(
                        "wordpress needs at least 3 instances, got {n}"
                    )));
                }
                Ok(CaseStudy::WordPress { min_instances: n })
            }
        }
    }
}

/// Looks up a case study by name.
pub fn case_study(name: &str) -> Result<Application> {
    name.parse::<CaseStudy>().map(CaseStudy::application)
}

fn hw(cpu: u64, mem: u64, sto: u64) -> HardwareVector {
    HardwareVector::new(cpu, mem, sto)
}

pub fn secure_web() -> Application {
    const BALANCER: usize = 1;
    const APACHE: usize = 2;
    const NGINX: usize = 3;
    const IDS_SERVER: usize = 4;
    const IDS_AGENT: usize = 5;
    let components = vec![
        Component::new(BALANCER, "Balancer", hw(4, 2048, 500)).with_bound(BoundKind::Equal, 1),
        Component::new(APACHE, "Apache", hw(2, 512, 1000)),
        Component::new(NGINX, "Nginx", hw(4, 2048, 1000)),
        Component::new(IDS_SERVER, "IDSServer", hw(8, 16000, 2000)),
        Component::new(IDS_AGENT, "IDSAgent", hw(1, 256, 250)).with_full_deployment(),
    ];
    let mut constraints = vec![
        Constraint::conflict(BALANCER, APACHE),
        Constraint::conflict(BALANCER, NGINX),
        Constraint::conflict(APACHE, NGINX),
        // The agent is never co-hosted with the balancer, so full deployment
        // skips the balancer's VM.
        Constraint::conflict(BALANCER, IDS_AGENT),
    ];
    for other in [BALANCER, APACHE, NGINX, IDS_AGENT] {
        constraints.push(Constraint::conflict(IDS_SERVER, other));
    }
    constraints.push(Constraint::group_bound([APACHE, NGINX], BoundOp::Ge, 3));
    // One IDSServer serves up to ten agents.
    constraints.push(Constraint::RequireProvide(RequireProvide::ratio(
        IDS_AGENT, IDS_SERVER, 1, 10,
    )));
    Application {
        name: "secure-web".into(),
        components,
        constraints,
        vm_budget: 6,
    }
}

pub fn secure_billing() -> Application {
    const CODING: usize = 1;
    const RIGHTS: usize = 2;
    const GATEWAY: usize = 3;
    const SQL: usize = 4;
    const BALANCER: usize = 5;
    let components = vec![
        Component::new(CODING, "CodingService", hw(4, 4096, 500)).with_bound(BoundKind::Equal, 1),
        Component::new(RIGHTS, "UserRightsManager", hw(2, 2048, 500)),
        Component::new(GATEWAY, "Gateway", hw(4, 4096, 500)),
        Component::new(SQL, "SQLServer", hw(2, 8192, 2000)),
        Component::new(BALANCER, "LoadBalancer", hw(1, 1024, 500)).with_bound(BoundKind::Equal, 1),
    ];
    let mut constraints: Vec<Constraint> = [RIGHTS, GATEWAY, SQL, BALANCER]
        .into_iter()
        .map(|other| Constraint::conflict(CODING, other))
        .collect();
    constraints.push(Constraint::conflict(BALANCER, GATEWAY));
    constraints.push(Constraint::conflict(BALANCER, SQL));
    Application {
        name: "secure-billing".into(),
        components,
        constraints,
        vm_budget: 5,
    }
}

pub fn oryx2() -> Application {
    const NAME_NODE: usize = 1;
    const SECONDARY_NAME_NODE: usize = 2;
    const RESOURCE_MANAGER: usize = 3;
    const YARN_HISTORY: usize = 4;
    const SPARK_HISTORY: usize = 5;
    const KAFKA: usize = 6;
    const ZOOKEEPER: usize = 7;
    const DATA_NODE: usize = 8;
    const NODE_MANAGER: usize = 9;
    const SPARK_WORKER: usize = 10;
    let components = vec![
        Component::new(NAME_NODE, "HDFS.NameNode", hw(4, 4096, 1000)),
        Component::new(SECONDARY_NAME_NODE, "HDFS.SecondaryNameNode", hw(4, 4096, 1000)),
        Component::new(RESOURCE_MANAGER, "YARN.ResourceManager", hw(4, 4096, 1000)),
        Component::new(YARN_HISTORY, "YARN.HistoryService", hw(2, 2048, 1000)).with_bound(BoundKind::Equal, 1),
        Component::new(SPARK_HISTORY, "Spark.HistoryService", hw(2, 2048, 1000)).with_bound(BoundKind::Equal, 1),
        Component::new(KAFKA, "Kafka", hw(2, 4096, 1000)),
        Component::new(ZOOKEEPER, "Zookeeper", hw(2, 2048, 1000)),
        Component::new(DATA_NODE, "HDFS.DataNode", hw(2, 4096, 1000)).with_full_deployment(),
        Component::new(NODE_MANAGER, "YARN.NodeManager", hw(2, 4096, 1000)).with_full_deployment(),
        Component::new(SPARK_WORKER, "Spark.Worker", hw(2, 4096, 1000)).with_full_deployment(),
    ];
    let constraints = vec![
        Constraint::colocation(DATA_NODE, SPARK_WORKER),
        Constraint::colocation(DATA_NODE, NODE_MANAGER),
        Constraint::colocation(NODE_MANAGER, SPARK_WORKER),
        Constraint::conflict(KAFKA, ZOOKEEPER),
        Constraint::conflict(NAME_NODE, SECONDARY_NAME_NODE),
        Constraint::conflict(RESOURCE_MANAGER, NAME_NODE),
        Constraint::conflict(RESOURCE_MANAGER, SECONDARY_NAME_NODE),
        Constraint::conflict(RESOURCE_MANAGER, YARN_HISTORY),
        // Each Kafka instance needs two Zookeeper instances.
        Constraint::RequireProvide(RequireProvide::ratio(KAFKA, ZOOKEEPER, 2, 1)),
    ];
    Application {
        name: "oryx2".into(),
        components,
        constraints,
        vm_budget: 5,
    }
}

pub fn wordpress(min_instances: u32) -> Application {
    const WORDPRESS: usize = 1;
    const MYSQL: usize = 2;
    const DNS_LB: usize = 3;
    const HTTP_LB: usize = 4;
    const VARNISH: usize = 5;
    let components = vec![
        Component::new(WORDPRESS, "WordPress", hw(2, 512, 1000)).with_bound(BoundKind::Lower, min_instances),
        Component::new(MYSQL, "MySQL", hw(2, 512, 2000)).with_bound(BoundKind::Lower, 2),
        Component::new(DNS_LB, "DNSLoadBalancer", hw(4, 2048, 500)).with_bound(BoundKind::Upper, 1),
        Component::new(HTTP_LB, "HTTPLoadBalancer", hw(4, 2048, 500)),
        Component::new(VARNISH, "Varnish", hw(4, 4000, 500)).with_bound(BoundKind::Lower, 2),
    ];
    let mut constraints = vec![
        // A DNS balancer fronts at most 7 WordPress instances, an HTTP
        // balancer at most 3; at least 2 MySQL per WordPress, 3 WordPress per MySQL.
        Constraint::RequireProvide(RequireProvide::ratio(WORDPRESS, DNS_LB, 1, 7)),
        Constraint::RequireProvide(RequireProvide::ratio(WORDPRESS, HTTP_LB, 1, 3)),
        Constraint::RequireProvide(RequireProvide::ratio(WORDPRESS, MYSQL, 2, 3)),
        Constraint::exclusive([DNS_LB, HTTP_LB]),
        Constraint::conflict(VARNISH, MYSQL),
    ];
    for balancer in [DNS_LB, HTTP_LB] {
        for other in [WORDPRESS, MYSQL, DNS_LB, HTTP_LB, VARNISH] {
            if other != balancer {
                constraints.push(Constraint::conflict(balancer, other));
            }
        }
    }
    constraints.sort_by_key(|c| format!("{c:?}"));
    constraints.dedup();
    let mut app = Application {
        name: format!("wordpress:{min_instances}"),
        components,
        constraints,
        vm_budget: 1,
    };
    app.vm_budget = app.suggested_vm_budget();
    app
}

fn offer(id: u32, cpu: u64, mem: u64, sto: u64, millis: u64) -> VmOffer {
    VmOffer::new(id, cpu, mem, sto, Price::from_millis(millis))
}

/// Twenty general-purpose offers in the style of a large public cloud price
/// list. Offers 5 and 7 carry the specifications used in the soft-constraint
/// walkthrough.
pub fn catalog_cloud20() -> Vec<VmOffer> {
    vec![
        offer(1, 1, 1700, 1000, 44),
        offer(2, 1, 3750, 4000, 67),
        offer(3, 2, 3750, 32000, 133),
        offer(4, 2, 7500, 32000, 140),
        offer(5, 1, 3750, 1000, 93),
        offer(6, 4, 15000, 80000, 266),
        offer(7, 64, 976_000, 1000, 8403),
        offer(8, 8, 15000, 160_000, 532),
        offer(9, 8, 30000, 160_000, 560),
        offer(10, 16, 30000, 320_000, 1064),
        offer(11, 4, 7500, 2000, 250),
        offer(12, 8, 32000, 4000, 479),
        offer(13, 4, 16000, 2000, 240),
        offer(14, 2, 8000, 1000, 100),
        offer(15, 4, 4000, 1000, 171),
        offer(16, 16, 64000, 4000, 958),
        offer(17, 32, 244_000, 4000, 2660),
        offer(18, 36, 60000, 4000, 1591),
        offer(19, 40, 160_000, 4000, 2128),
        offer(20, 2, 4000, 1000, 96),
    ]
}

/// Twenty-seven small droplet-style offers (at most 8 cores each).
pub fn catalog_droplet27() -> Vec<VmOffer> {
    let shapes: [(u64, u64, u64, u64); 27] = [
        (1, 512, 10000, 4),
        (1, 1024, 25000, 7),
        (1, 2048, 50000, 10),
        (2, 2048, 60000, 15),
        (2, 4096, 80000, 20),
        (4, 8192, 160_000, 40),
        (6, 16384, 320_000, 80),
        (8, 32768, 640_000, 160),
        (1, 1024, 25000, 8),
        (2, 2048, 50000, 16),
        (2, 4096, 25000, 24),
        (4, 8192, 50000, 48),
        (8, 16384, 100_000, 96),
        (2, 8192, 25000, 30),
        (4, 16384, 50000, 60),
        (8, 32768, 100_000, 120),
        (1, 2048, 25000, 12),
        (2, 4096, 50000, 22),
        (4, 8192, 80000, 44),
        (8, 16384, 160_000, 88),
        (2, 16384, 50000, 45),
        (4, 32768, 100_000, 90),
        (8, 65536, 200_000, 180),
        (1, 1024, 10000, 5),
        (2, 2048, 30000, 13),
        (4, 4096, 60000, 26),
        (8, 8192, 120_000, 52),
    ];
    shapes
        .iter()
        .enumerate()
        .map(|(idx, &(cpu, mem, sto, cents))| offer(idx as u32 + 1, cpu, mem, sto, cents * 10))
        .collect()
}

/// A seeded synthetic catalog of `n` offers with prices roughly linear in
/// the resources plus noise, so that cheaper and pricier options coexist at
/// every size.
pub fn synthetic_catalog(n: usize, seed: u64) -> Vec<VmOffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const CPUS: [u64; 7] = [1, 2, 4, 8, 16, 32, 64];
    (0..n)
        .map(|idx| {
            let cpu = CPUS[rng.gen_range(0..CPUS.len())];
            let mem_per_core = [1024u64, 2048, 4096, 8192][rng.gen_range(0..4)];
            let mem = cpu * mem_per_core;
            let sto = [1000u64, 2000, 4000, 8000, 16000][rng.gen_range(0..5)];
            let base = 20.0 * cpu as f64 + 0.004 * mem as f64 + 0.002 * sto as f64;
            let noise: f64 = rng.gen_range(0.8..1.25);
            let millis = ((base * noise).round() as u64).max(1);
            offer(idx as u32 + 1, cpu, mem, sto, millis)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secure_web_shape() {
        let app = case_study("secure-web").unwrap().validated().unwrap();
        assert_eq!(app.components.len(), 5);
        let balancer = app.component_by_name("Balancer").unwrap();
        assert_eq!(
            balancer.bound,
            Some(crate::model::Bound {
                kind: BoundKind::Equal,
                value: 1
            })
        );
        assert!(app.component_by_name("IDSAgent").unwrap().full_deployment);
        assert_eq!(app.vm_budget, 6);
        assert_eq!(app.suggested_vm_budget(), 6);
    }

    #[test]
    fn wordpress_lower_bound() {
        let app = case_study("wordpress").unwrap().validated().unwrap();
        let wp = app.component_by_name("WordPress").unwrap();
        assert_eq!(
            wp.bound,
            Some(crate::model::Bound {
                kind: BoundKind::Lower,
                value: 3
            })
        );
        assert_eq!(app.vm_budget, 8);
        assert!(app.constraints.contains(&Constraint::exclusive([3, 4])));
        let app5 = case_study("wordpress:5").unwrap();
        assert_eq!(app5.component_by_name("WordPress").unwrap().bound.unwrap().value, 5);
        assert!("wordpress:2".parse::<CaseStudy>().is_err());
    }

    #[test]
    fn oryx2_kafka_zookeeper() {
        let app = case_study("oryx2").unwrap().validated().unwrap();
        let kafka = app.component_by_name("Kafka").unwrap().id;
        let zk = app.component_by_name("Zookeeper").unwrap().id;
        let rp = app
            .constraints
            .iter()
            .find_map(|c| match c {
                Constraint::RequireProvide(rp) if rp.i == kafka && rp.j == zk => Some(*rp),
                _ => None,
            })
            .unwrap();
        // One Kafka per two Zookeepers.
        assert!(rp.holds(1, 2));
        assert!(!rp.holds(1, 1));
        assert_eq!(app.components.len(), 10);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(case_study("tomcat"), Err(Error::UnknownCaseStudy(_))));
    }

    #[test]
    fn catalogs_valid() {
        for catalog in [catalog_cloud20(), catalog_droplet27(), synthetic_catalog(40, 7)] {
            let p = crate::model::DeploymentProblem::new(secure_web(), catalog);
            assert!(p.is_ok());
        }
        let c = catalog_cloud20();
        assert_eq!(c[6].spec, hw(64, 976_000, 1000));
        assert_eq!(c[6].price.to_string(), "8.403");
        assert_eq!(c[4].price.to_string(), "0.093");
        assert_eq!(catalog_droplet27().len(), 27);
        assert_eq!(synthetic_catalog(40, 1), synthetic_catalog(40, 1));
    }
}
