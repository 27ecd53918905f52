// temporary probe: federated trials across seeds at N=10, T=6
use fedflex::federated::*;
use fedflex::flex::*;
use std::time::Instant;

fn main() {
    fedflex::init_threading();
    let hz = Horizon::new(6, 1.0).unwrap();
    let mut rs = vec![];
    let t_all = Instant::now();
    for seed in 1u64..=10 {
        let fleet = sample_fleet(10, &hz, seed);
        let offs = fleet_offsets(&fleet, &hz).unwrap();
        let config = FederatedConfig { max_iters: 100, ..Default::default() };
        let t0 = Instant::now();
        match run_federated_optimization(&offs, &hz, &config) {
            Ok((_, trace)) => {
                let gain = trace.last().unwrap().log_objective - trace[0].log_objective;
                let r = (gain / hz.slots() as f64).exp();
                println!("seed {seed}: {:3} accepted, r = {r:.4}, wall {:?}", trace.len() - 1, t0.elapsed());
                rs.push(r);
            }
            Err(e) => println!("seed {seed}: ERROR {e}"),
        }
    }
    rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("total {:?}  min r {:?}  median r {:?}", t_all.elapsed(), rs.first(), rs.get(rs.len() / 2));
}
