use gshp_core::hybrid::*;
use gshp_core::synth::{synth_pair, SynthProfileSpec};

fn fixture() -> gshp_core::profile::ProfilePair {
    synth_pair(&SynthProfileSpec::default(), 42).unwrap()
}

#[test]
fn annuity_matches_closed_form() {
    let flows: Vec<f64> = (0..=20).map(|t| if t == 0 { 0.0 } else { 1.0 }).collect();
    let closed = (1.0 - 1.08f64.powi(-20)) / 0.08;
    let got = npv(&flows, 0.08).unwrap();
    assert!((got / closed - 1.0).abs() < 1e-10);
    assert!((got - 9.81815).abs() < 5e-6);
}

#[test]
fn sweep_costs_move_in_opposite_directions() {
    let p = fixture();
    let opt = optimize(&p.heating, &p.cooling, &HybridParams::default()).unwrap();
    assert_eq!(opt.sweep.len(), 101);
    assert!(opt.sweep.iter().all(|r| r.feasible));
    for w in opt.sweep.windows(2) {
        assert!(w[1].capital >= w[0].capital, "capital drops at alpha {}", w[1].alpha);
        assert!(w[1].opex_year1 <= w[0].opex_year1, "opex rises at alpha {}", w[1].alpha);
    }
    let min = opt.sweep.iter().map(|r| r.npv).fold(f64::INFINITY, f64::min);
    assert_eq!(opt.design.npv_total, min);
    assert_eq!(opt.sweep[opt.index].npv, min);
}

#[test]
fn cheap_drilling_gives_interior_optimum_matching_fine_search() {
    let p = fixture();
    let mut params = HybridParams::default();
    params.costs.ghx_unit_cost = 1.0;
    let opt = optimize(&p.heating, &p.cooling, &params).unwrap();
    let best = opt.design.shave.alpha;
    assert!(
        opt.index > 0 && opt.index < 100,
        "optimum at the boundary, alpha {best}"
    );

    // Brute force on a 0.001 grid across the neighbouring coarse cells.
    let lo = (best - 0.02).max(0.0);
    let fine: Vec<(f64, f64)> = (0..=40)
        .map(|i| lo + i as f64 * 0.001)
        .filter(|a| *a <= 1.0)
        .map(|a| (a, evaluate(&p.heating, &p.cooling, a, &params).unwrap().npv_total))
        .collect();
    let (fine_alpha, fine_min) =
        fine.iter().copied().fold(
            (f64::NAN, f64::INFINITY),
            |acc, (a, v)| {
                if v < acc.1 {
                    (a, v)
                } else {
                    acc
                }
            },
        );
    assert!(
        (fine_alpha - best).abs() <= 0.01 + 1e-12,
        "fine argmin {fine_alpha} vs grid {best}"
    );
    assert!(opt.design.npv_total - fine_min <= 1e-3 * fine_min);
}

#[test]
fn sweep_csv_is_reproducible() {
    let p = fixture();
    let params = HybridParams::default();
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_sweep_csv(&mut a, &optimize(&p.heating, &p.cooling, &params).unwrap().sweep).unwrap();
    write_sweep_csv(&mut b, &optimize(&p.heating, &p.cooling, &params).unwrap().sweep).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let alphas: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(alphas.first(), Some(&"0.00"));
    assert_eq!(alphas.last(), Some(&"1.00"));
    assert_eq!(alphas.len(), 101);
}
