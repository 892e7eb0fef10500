//! Powell's direction-set minimizer with golden-section line searches.
//!
//! Derivative-free: the only thing it needs is point evaluations, which is
//! what a Monte Carlo objective can offer. The direction-set update follows
//! the classic recipe: after each sweep over the current directions, the
//! net displacement may replace the direction of largest single decrease,
//! guarded by the usual extrapolation test.

const GOLD: f64 = 1.618_033_988_749_895;
const INV_GOLD: f64 = 0.618_033_988_749_895;

#[derive(Debug, Clone)]
pub struct PowellParams {
    /// Stop when a full sweep improves the objective by less than this.
    pub ftol: f64,
    /// Hard cap on sweeps.
    pub max_iters: usize,
    /// Initial step used to bracket each line minimum.
    pub bracket_step: f64,
    /// Absolute interval tolerance for the golden-section refinement.
    pub line_xtol: f64,
}

impl Default for PowellParams {
    fn default() -> Self {
        PowellParams {
            ftol: 1e-6,
            max_iters: 50,
            bracket_step: 0.3,
            line_xtol: 3e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowellResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub converged: bool,
    pub evaluations: u64,
}

struct Eval<'a, F> {
    f: &'a mut F,
    count: u64,
}

impl<F: FnMut(&[f64]) -> f64> Eval<'_, F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.count += 1;
        (self.f)(x)
    }
}

/// Minimize `f` starting from `x0`. Never returns a point worse than the
/// best one evaluated; hitting `max_iters` just reports `converged: false`.
pub fn minimize<F>(mut f: F, x0: &[f64], params: &PowellParams) -> PowellResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0, "empty parameter vector");
    let mut eval = Eval {
        f: &mut f,
        count: 0,
    };

    let mut point = x0.to_vec();
    let mut value = eval.call(&point);
    let mut directions: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            d
        })
        .collect();

    let mut iters = 0;
    let mut converged = false;

    while iters < params.max_iters {
        iters += 1;
        let sweep_start_point = point.clone();
        let sweep_start_value = value;
        let mut biggest_drop = 0.0f64;
        let mut biggest_index = 0usize;

        for (i, dir) in directions.iter().enumerate() {
            let before = value;
            let (next, next_value) = line_minimize(&mut eval, &point, dir, value, params);
            point = next;
            value = next_value;
            if before - value > biggest_drop {
                biggest_drop = before - value;
                biggest_index = i;
            }
        }

        if sweep_start_value - value < params.ftol {
            converged = true;
            break;
        }

        // Extrapolate through the sweep displacement and decide whether the
        // displacement should join the direction set.
        let displacement: Vec<f64> = point
            .iter()
            .zip(&sweep_start_point)
            .map(|(p, s)| p - s)
            .collect();
        let extrapolated: Vec<f64> = point
            .iter()
            .zip(&sweep_start_point)
            .map(|(p, s)| 2.0 * p - s)
            .collect();
        let f_ext = eval.call(&extrapolated);

        if f_ext < sweep_start_value {
            let d1 = sweep_start_value - value - biggest_drop;
            let d2 = sweep_start_value - f_ext;
            let t =
                2.0 * (sweep_start_value - 2.0 * value + f_ext) * d1 * d1 - biggest_drop * d2 * d2;
            if t < 0.0 {
                let (next, next_value) =
                    line_minimize(&mut eval, &point, &displacement, value, params);
                point = next;
                value = next_value;
                directions.swap_remove(biggest_index);
                directions.push(displacement);
            }
        }
    }

    PowellResult {
        x: point,
        f: value,
        iters,
        converged,
        evaluations: eval.count,
    }
}

/// Minimize along `point + t * dir`. Returns the new point and value; falls
/// back to the starting point when no improvement is found along the line.
fn line_minimize<F: FnMut(&[f64]) -> f64>(
    eval: &mut Eval<F>,
    point: &[f64],
    dir: &[f64],
    f0: f64,
    params: &PowellParams,
) -> (Vec<f64>, f64) {
    let scale: f64 = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (point.to_vec(), f0);
    }
    let at = |t: f64, eval: &mut Eval<F>| -> f64 {
        let x: Vec<f64> = point.iter().zip(dir).map(|(p, d)| p + t * d).collect();
        eval.call(&x)
    };

    let step = params.bracket_step / scale;
    let (a, c, fa, fc) = bracket(|t, e| at(t, e), eval, step, f0);
    let (t_min, f_min) = golden_section(
        |t, e| at(t, e),
        eval,
        a,
        c,
        fa,
        fc,
        params.line_xtol / scale,
    );

    if f_min < f0 {
        let x: Vec<f64> = point.iter().zip(dir).map(|(p, d)| p + t_min * d).collect();
        (x, f_min)
    } else {
        (point.to_vec(), f0)
    }
}

/// Expand outward from t=0 until the minimum is bracketed: returns (a, c)
/// with a known interior point below both ends discovered along the way.
fn bracket<F, G>(mut at: G, eval: &mut Eval<F>, step: f64, f0: f64) -> (f64, f64, f64, f64)
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(f64, &mut Eval<F>) -> f64,
{
    let mut a = 0.0;
    let mut fa = f0;
    let mut b = step;
    let mut fb = at(b, eval);
    if fb > fa {
        // Downhill is the other way
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + GOLD * (b - a);
    let mut fc = at(c, eval);
    let mut expansions = 0;
    while fc < fb && expansions < 40 {
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        c = b + GOLD * (b - a);
        fc = at(c, eval);
        expansions += 1;
    }
    if a <= c {
        (a, c, fa, fc)
    } else {
        (c, a, fc, fa)
    }
}

/// Golden-section refinement on [a, c].
fn golden_section<F, G>(
    mut at: G,
    eval: &mut Eval<F>,
    a: f64,
    c: f64,
    fa: f64,
    fc: f64,
    xtol: f64,
) -> (f64, f64)
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(f64, &mut Eval<F>) -> f64,
{
    let mut lo = a;
    let mut hi = c;
    let mut x1 = hi - INV_GOLD * (hi - lo);
    let mut x2 = lo + INV_GOLD * (hi - lo);
    let mut f1 = at(x1, eval);
    let mut f2 = at(x2, eval);
    // Track the best point seen, end points included
    let mut best = if fa < fc { (a, fa) } else { (c, fc) };

    while hi - lo > xtol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_GOLD * (hi - lo);
            f1 = at(x1, eval);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_GOLD * (hi - lo);
            f2 = at(x2, eval);
        }
    }

    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}
