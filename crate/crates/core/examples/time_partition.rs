//! Automatic time partitioning: cuts chosen so every interval has a similar
//! rank-`n_probe` POD tail, compared with uniform cuts.

use poddl::analysis::piecewise_pod_errors;
use poddl::dataset::split_samples;
use poddl::fom::{generate_dataset, FomConfig};
use poddl::partition::{auto_partition, TimePartition};

fn main() -> poddl::error::Result<()> {
    let set = generate_dataset(&FomConfig::desk(), &FomConfig::desk_params())?;
    let split = split_samples(&set, (0.75, 0.15, 0.10), 1)?;
    let (t0, t1) = (set.times()[0], *set.times().last().unwrap());

    for j in 1..=4 {
        let auto = auto_partition(&set, j, 8)?;
        let uniform = TimePartition::new((0..=j).map(|k| t0 + (t1 - t0) * k as f64 / j as f64).collect())?;
        let ea = piecewise_pod_errors(&set, &split, &auto, 8, &split.test)?;
        let eu = piecewise_pod_errors(&set, &split, &uniform, 8, &split.test)?;
        let cuts: Vec<String> = auto.boundaries().iter().map(|b| format!("{b:.4}")).collect();
        println!("J = {j}: cuts [{}]", cuts.join(", "));
        println!("       POD(8) test L2: auto {:.4}  uniform {:.4}", ea[1], eu[1]);
    }
    Ok(())
}
