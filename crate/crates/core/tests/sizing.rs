use std::f64::consts::PI;

use gshp_core::ground::{BorefieldLayout, BoreholeResistance, GroundProperties};
use gshp_core::sizing::*;
use gshp_core::Mode;

/// Adaptive Simpson on [a, b].
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Line-source temperature rise per W/m from the time integral of the
/// instantaneous line source, K m/W.
fn line_source_oracle(t_days: f64, r: f64, g: &GroundProperties) -> f64 {
    let alpha = g.diffusivity / 86_400.0;
    let t = t_days * 86_400.0;
    let c = r * r / (4.0 * alpha);
    // tau = e^u; exp(-c/tau) < e^-745 below u_min.
    let u_min = (c / 745.0).ln();
    let f = |u: f64| (-c / u.exp()).exp();
    simpson(&f, u_min, t.ln(), 1e-15) / (4.0 * PI * g.conductivity)
}

#[test]
fn resistances_match_quadrature_oracle() {
    let g = GroundProperties::default();
    let p = PulseSchedule::default();
    let r = ground_resistances(&g, &p).unwrap();
    let rb = g.borehole_radius();
    let o = |t: f64| line_source_oracle(t, rb, &g);
    let want = [
        (r.annual, o(7330.25) - o(30.25)),
        (r.monthly, o(30.25) - o(0.25)),
        (r.daily, o(0.25)),
    ];
    for (got, oracle) in want {
        assert!((got / oracle - 1.0).abs() < 1e-6, "{got} vs {oracle}");
    }
}

#[test]
fn penalty_matches_quadrature_oracle() {
    let g = GroundProperties::default();
    let layout = BorefieldLayout::rectangular(2, 6.0, 200.0, 5.0, g.borehole_radius()).unwrap();
    // 10 W/m over 400 m.
    let tp = temperature_penalty(&layout, &g, 4.0, 400.0, 7300.0).unwrap();
    let oracle = 10.0 * line_source_oracle(7300.0, 6.0, &g);
    assert!((tp / oracle - 1.0).abs() < 1e-6, "{tp} vs {oracle}");
}

#[test]
fn hand_calculated_cooling_length() {
    let r_g = ground_resistances(&GroundProperties::default(), &PulseSchedule::default()).unwrap();
    let c_fc = 1.0 + 1.0 / 5.5;
    let inputs = SizingInputs {
        q_lc: 100.0 / c_fc,
        q_lh: 0.0,
        eflh_c: 1000.0,
        eflh_h: 0.0,
        c_fc,
        c_fh: 1.0 - 1.0 / 3.5,
        f_sc: 1.04,
        plf_c: 0.4,
        plf_h: 1.0,
        r_b: 0.13,
        r_g,
        t_p: 0.0,
        t_g: 18.0,
        temperatures: DesignTemperatures::default(),
    };
    assert!((annual_net_flux(&inputs) - 11.415_525).abs() < 1e-5);
    let l = required_length(Mode::Cooling, &inputs).unwrap();
    assert!((l - 3128.1737).abs() < 1e-3, "{l}");
    assert_eq!(required_length(Mode::Heating, &inputs).unwrap(), 0.0);
}

#[test]
fn mirrored_loads_swap_lengths() {
    let params = SizingParams {
        borehole_resistance: BoreholeResistance::Fixed(0.12),
        temperatures: DesignTemperatures {
            cooling_inlet: 25.0,
            cooling_outlet: 30.0,
            heating_inlet: 11.0,
            heating_outlet: 6.0,
        },
        ..SizingParams::default()
    };
    let (c_fc, c_fh) = cop_corrections(params.cop_cooling, params.cop_heating).unwrap();
    let cooling = BlockLoad {
        peak: 300.0,
        eflh: 1400.0,
        plf: 0.55,
    };
    let heating = BlockLoad {
        peak: 120.0,
        eflh: 900.0,
        plf: 0.45,
    };
    let a = size_borefield(&cooling, &heating, &params).unwrap();
    let cooling_m = BlockLoad {
        peak: heating.peak * c_fh / c_fc,
        ..heating
    };
    let heating_m = BlockLoad {
        peak: cooling.peak * c_fc / c_fh,
        ..cooling
    };
    let b = size_borefield(&cooling_m, &heating_m, &params).unwrap();
    assert!((a.q_a + b.q_a).abs() < 1e-9);
    assert!((a.length_cooling / b.length_heating - 1.0).abs() < 1e-9);
    assert!((a.length_heating / b.length_cooling - 1.0).abs() < 1e-9);
    assert_eq!(a.borehole_count, b.borehole_count);
}

#[test]
fn sized_field_is_self_consistent() {
    let params = SizingParams::default();
    let cooling = BlockLoad {
        peak: 800.0,
        eflh: 1600.0,
        plf: 0.6,
    };
    let heating = BlockLoad {
        peak: 200.0,
        eflh: 600.0,
        plf: 0.4,
    };
    let r = size_borefield(&cooling, &heating, &params).unwrap();
    assert_eq!(r.length, r.length_cooling.max(r.length_heating));
    assert_eq!(r.borehole_count, borehole_count(r.length, 200.0));
    // The settled penalty reproduces itself on the settled layout.
    let layout = params.layout(r.borehole_count).unwrap();
    let tp = temperature_penalty(&layout, &params.ground, r.q_a, r.length, 7300.0).unwrap();
    assert!((tp / r.inputs.t_p - 1.0).abs() < 1e-9);
    assert!(r.inputs.t_p > 0.0);

    let zero = size_borefield(&BlockLoad::ZERO, &BlockLoad::ZERO, &params).unwrap();
    assert_eq!((zero.length, zero.borehole_count), (0.0, 0));
}

#[test]
fn shallower_bores_double_the_count() {
    let cooling = BlockLoad {
        peak: 400.0,
        eflh: 1200.0,
        plf: 0.5,
    };
    let deep = size_borefield(&cooling, &BlockLoad::ZERO, &SizingParams::default()).unwrap();
    let l = deep.length;
    assert!((borehole_count(l, 100.0) as i64 - 2 * borehole_count(l, 200.0) as i64).abs() <= 1);
}
