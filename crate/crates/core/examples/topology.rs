//! Random geometric network, one broadcast round and a joint-connectivity check.

use eco_dkf::netsim::{deliver, generate_topology, pjc_check, radius_for_degree, Connectivity};
use eco_dkf::rng::{stream, Stream};

pub fn run_example() -> eco_dkf::Result<()> {
    let mut rng = stream(42, Stream::Scenario);
    let topo = generate_topology(20, Connectivity::MeanDegree(4.0), &mut rng)?;
    println!(
        "20 nodes, radius {:.3}, {} edges, mean degree {:.2}",
        radius_for_degree(20, 4.0),
        topo.edge_count(),
        topo.mean_degree()
    );

    // even nodes speak at one step, odd nodes at the next
    let even: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
    let odd: Vec<bool> = even.iter().map(|b| !b).collect();
    let rounds = vec![deliver(&topo, &even, 0)?, deliver(&topo, &odd, 1)?];
    println!("node 1 heard {:?} at step 0", rounds[0].inboxes[1]);
    let pjc = pjc_check(&rounds)?;
    println!("jointly connected: {} (t_min {:?})", pjc.is_pjc, pjc.t_min);
    Ok(())
}

#[allow(dead_code)]
fn main() -> eco_dkf::Result<()> {
    run_example()
}
