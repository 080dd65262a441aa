use ste_core::copula::*;
use ste_core::dvine::*;
use ste_core::extremes::*;
use ste_core::signal::*;
use ste_core::sim::*;

fn run(rho: f64, eta: (usize, usize), reps: u64) -> (f64, usize) {
    let mut taus = vec![]; let mut sel = 0;
    for rep in 0..reps {
        let mut cfg = PairConfig::default_with(
            CausalTopology::single_link(Channel::X, Channel::Y, "theta"), 30.0);
        cfg.eta = eta;
        for o in cfg.oscillators.iter_mut() { o.rho_c = rho; }
        let (x, y, _) = gen_channel_pair(&cfg, 2000 + rep).unwrap();
        let spec = FilterSpec::new(BandSpec::preset("theta").unwrap());
        let xf = filter_band(&x, &spec).unwrap();
        let yf = filter_band(&y, &spec).unwrap();
        let bx = block_maxima(&xf, 32).unwrap();
        let by = block_maxima(&yf, 32).unwrap();
        let ux = pit(&bx, &fit_margin(&bx, MarginChoice::Ecdf, 15.0).unwrap());
        let uy = pit(&by, &fit_margin(&by, MarginChoice::Ecdf, 15.0).unwrap());
        let panel = build_panel(&uy, &ux, 1, 1).unwrap();
        let vine = fit_dvine(&panel, &FamilyKind::all()).unwrap();
        if !vine.trees[1][0].is_independence() { sel += 1; }
        let e01 = &vine.trees[0][0];
        let e12 = &vine.trees[0][1];
        let pp: Vec<(f64,f64)> = (0..panel.n_rows()).map(|r| {
            let row = panel.row(r);
            (e01.h1(row[0], row[1]).unwrap(), e12.h2(row[2], row[1]).unwrap())
        }).collect();
        taus.push(kendall_tau(&pp));
    }
    (taus.iter().sum::<f64>() / reps as f64, sel)
}

fn main() {
    for (rho, eta) in [
        (0.98, (29, 35)), (0.99, (29, 35)), (0.995, (29, 35)),
        (0.98, (31, 33)), (0.995, (31, 33)), (0.98, (32, 32)),
    ]{
        let (t, sel) = run(rho, eta, 32);
        println!("rho {rho} eta {eta:?} -> partial tau {t:.4} selected {sel}/32");
    }
}
