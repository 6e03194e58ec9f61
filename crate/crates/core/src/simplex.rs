//! Bounded Nelder-Mead simplex descent used for local refinement.
//!
//! The feasible set is expressed through the objective: callers wrap their
//! function so that it clamps to the box and returns `+inf` for points that
//! violate any additional constraint (e.g. a ball). Infeasible vertices are
//! simply the worst-ranked ones, so reflection steps that leave the feasible
//! set are rejected in favor of contraction.

use nalgebra::DVector;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` starting from `x0` with an orthogonal initial simplex of the
/// given size, running exactly `iterations` update steps. Returns the best
/// vertex and its value; ties and all evaluations are deterministic.
pub fn nelder_mead(
    f: &mut dyn FnMut(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
    simplex_size: f64,
    iterations: usize,
) -> (DVector<f64>, f64) {
    let d = x0.len();
    let mut vertices: Vec<(DVector<f64>, f64)> = Vec::with_capacity(d + 1);
    vertices.push((x0.clone(), f(x0)));
    for i in 0..d {
        let mut x = x0.clone();
        x[i] += simplex_size;
        let fx = f(&x);
        // If the step is infeasible or useless, try the opposite direction.
        if !fx.is_finite() {
            let mut xm = x0.clone();
            xm[i] -= simplex_size;
            let fm = f(&xm);
            if fm.is_finite() {
                vertices.push((xm, fm));
                continue;
            }
        }
        vertices.push((x, fx));
    }

    let order = |a: &(DVector<f64>, f64), b: &(DVector<f64>, f64)| a.1.total_cmp(&b.1);
    vertices.sort_by(order);

    for _ in 0..iterations {
        let worst = vertices.len() - 1;
        let centroid: DVector<f64> = {
            let mut c = DVector::zeros(d);
            for v in &vertices[..worst] {
                c += &v.0;
            }
            c / worst as f64
        };
        let reflected = &centroid + (&centroid - &vertices[worst].0) * REFLECT;
        let fr = f(&reflected);

        if fr < vertices[0].1 {
            let expanded = &centroid + (&reflected - &centroid) * EXPAND;
            let fe = f(&expanded);
            vertices[worst] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < vertices[worst - 1].1 {
            vertices[worst] = (reflected, fr);
        } else {
            let contract_base = if fr < vertices[worst].1 { &reflected } else { &vertices[worst].0 };
            let contracted = &centroid + (contract_base - &centroid) * CONTRACT;
            let fc = f(&contracted);
            if fc < vertices[worst].1.min(fr) {
                vertices[worst] = (contracted, fc);
            } else {
                let best = vertices[0].0.clone();
                for v in vertices.iter_mut().skip(1) {
                    let x = &best + (&v.0 - &best) * SHRINK;
                    let fx = f(&x);
                    *v = (x, fx);
                }
            }
        }
        vertices.sort_by(order);
    }

    vertices.swap_remove(0)
}
