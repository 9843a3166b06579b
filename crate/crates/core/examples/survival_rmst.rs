//! Kaplan-Meier curves and restricted mean survival time, with the horizon
//! taken from the pooled event times.
//!
//! ```text
//! cargo run --example survival_rmst
//! ```

use refbench::estimators::km::{km_curve, restriction_horizon, rmst_with_se};

fn main() -> refbench::Result<()> {
    let curve = km_curve(&[1.0, 2.0, 3.0, 4.0], &[true; 4], None);
    println!("four events at days 1..4: knots {:?}, RMST(4) = {}", curve.knots, curve.rmst(4.0)?);

    // Two small arms with censoring.
    let a_times = [5.0, 8.0, 8.0, 12.0, 15.0, 20.0, 22.0, 30.0];
    let a_events = [true, true, false, true, false, true, true, false];
    let b_times = [3.0, 4.0, 6.0, 6.0, 9.0, 11.0, 14.0, 18.0];
    let b_events = [true, true, true, false, true, true, false, true];
    let pooled_t: Vec<f64> = a_times.iter().chain(&b_times).copied().collect();
    let pooled_e: Vec<bool> = a_events.iter().chain(&b_events).copied().collect();
    let tau = restriction_horizon(&pooled_t, &pooled_e, 0.8).expect("there are events");
    let (ra, sa) = rmst_with_se(&a_times, &a_events, None, tau)?;
    let (rb, sb) = rmst_with_se(&b_times, &b_events, None, tau)?;
    println!("tau = {tau}: arm A {ra:.2} ± {sa:.2}, arm B {rb:.2} ± {sb:.2}, difference {:.2}", ra - rb);
    for t in [0.0, 5.0, 10.0, 20.0] {
        println!("  S_A({t}) = {:.3}", km_curve(&a_times, &a_events, None).value_at(t));
    }
    Ok(())
}
