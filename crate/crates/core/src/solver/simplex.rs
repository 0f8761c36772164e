use super::{LinearProgram, Relation, Sense, Solution, SolverError, Status, Tolerances, TOLERANCES};

const NOT_BASIC: usize = usize::MAX;
const REINVERT_EVERY: usize = 64;
const MAX_PIVOTS: usize = 200_000;
const DEGENERATE_STEP: f64 = 1e-12;

/// Solves `lp` with the two-phase bounded simplex.
pub fn solve_lp(lp: &LinearProgram) -> Result<Solution, SolverError> {
    lp.validate()?;
    solve_validated(lp, &TOLERANCES)
}

pub(crate) fn solve_validated(
    lp: &LinearProgram,
    tol: &Tolerances,
) -> Result<Solution, SolverError> {
    let sign = match lp.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };

    // Fixed variables are folded into the right-hand sides.
    let n_orig = lp.variables.len();
    let mut column_of = vec![NOT_BASIC; n_orig];
    let mut structural = Vec::new();
    for (j, v) in lp.variables.iter().enumerate() {
        if v.lower != v.upper {
            column_of[j] = structural.len();
            structural.push(j);
        }
    }
    let ns = structural.len();
    let m = lp.constraints.len();
    let n_slack = lp
        .constraints
        .iter()
        .filter(|c| c.relation != Relation::Eq)
        .count();

    let mut rows = vec![vec![0.0; ns + n_slack]; m];
    let mut rhs = vec![0.0; m];
    let mut slack_sign = vec![0.0; m];
    let mut next_slack = ns;
    let mut slack_col = vec![NOT_BASIC; m];
    for (i, c) in lp.constraints.iter().enumerate() {
        let mut b = c.rhs;
        for &(j, a) in &c.terms {
            if column_of[j] == NOT_BASIC {
                b -= a * lp.variables[j].lower;
            } else {
                rows[i][column_of[j]] += a;
            }
        }
        rhs[i] = b;
        match c.relation {
            Relation::Le => slack_sign[i] = 1.0,
            Relation::Ge => slack_sign[i] = -1.0,
            Relation::Eq => {}
        }
        if c.relation != Relation::Eq {
            rows[i][next_slack] = slack_sign[i];
            slack_col[i] = next_slack;
            next_slack += 1;
        }
    }

    let mut lower = Vec::with_capacity(ns + n_slack + m);
    let mut upper = Vec::with_capacity(ns + n_slack + m);
    let mut x = Vec::with_capacity(ns + n_slack + m);
    for &j in &structural {
        let v = &lp.variables[j];
        lower.push(v.lower);
        upper.push(v.upper);
        x.push(if v.lower.is_finite() {
            v.lower
        } else if v.upper.is_finite() {
            v.upper
        } else {
            0.0
        });
    }
    for _ in 0..n_slack {
        lower.push(0.0);
        upper.push(f64::INFINITY);
        x.push(0.0);
    }

    // Initial basis: a slack where its sign matches the residual, an
    // artificial otherwise.
    let mut basis = vec![NOT_BASIC; m];
    let mut n_art = 0;
    let mut art_sign = vec![0.0; m];
    for i in 0..m {
        let r = rhs[i]
            - rows[i][..ns]
                .iter()
                .zip(&x[..ns])
                .map(|(a, v)| a * v)
                .sum::<f64>();
        if slack_col[i] != NOT_BASIC && slack_sign[i] * r >= 0.0 {
            basis[i] = slack_col[i];
            x[slack_col[i]] = slack_sign[i] * r;
        } else {
            art_sign[i] = if r >= 0.0 { 1.0 } else { -1.0 };
            n_art += 1;
        }
    }
    let n = ns + n_slack + n_art;
    let mut a = vec![0.0; m * n];
    let mut next_art = ns + n_slack;
    for i in 0..m {
        a[i * n..i * n + ns + n_slack].copy_from_slice(&rows[i]);
        if basis[i] == NOT_BASIC {
            a[i * n + next_art] = art_sign[i];
            basis[i] = next_art;
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(0.0);
            next_art += 1;
        }
    }

    let mut tab = Tableau {
        m,
        n,
        a,
        b: rhs,
        t: Vec::new(),
        lower,
        upper,
        x,
        basis,
        position: vec![NOT_BASIC; n],
        cost: vec![0.0; n],
        d: vec![0.0; n],
        tol: *tol,
        pivots: 0,
        degenerate: 0,
        bland: false,
        since_reinvert: 0,
    };
    for (i, &k) in tab.basis.iter().enumerate() {
        tab.position[k] = i;
    }
    tab.reinvert()?;

    if n_art > 0 {
        for k in ns + n_slack..n {
            tab.cost[k] = 1.0;
        }
        tab.start_phase()?;
        match tab.run()? {
            PhaseEnd::Optimal => {}
            // Phase one is bounded below by zero.
            PhaseEnd::Unbounded => return Err(SolverError::SingularBasis),
        }
        let infeasibility: f64 = (ns + n_slack..n).map(|k| tab.x[k]).sum();
        let scale = tab.b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > tol.feasibility * scale {
            return Ok(Solution::without_values(Status::Infeasible, f64::NAN, 1));
        }
        for k in ns + n_slack..n {
            tab.upper[k] = 0.0;
            if tab.position[k] == NOT_BASIC {
                tab.x[k] = 0.0;
            }
            tab.cost[k] = 0.0;
        }
    }

    for (c, &j) in structural.iter().enumerate() {
        tab.cost[c] = -sign * lp.variables[j].objective;
    }
    tab.start_phase()?;
    if let PhaseEnd::Unbounded = tab.run()? {
        let bound = sign * f64::INFINITY;
        return Ok(Solution::without_values(Status::Unbounded, bound, 1));
    }

    let mut values = vec![0.0; n_orig];
    for (j, v) in lp.variables.iter().enumerate() {
        let raw = if column_of[j] == NOT_BASIC {
            v.lower
        } else {
            tab.x[column_of[j]]
        };
        values[j] = raw.max(v.lower).min(v.upper);
    }
    let objective = lp.objective_value(&values);
    Ok(Solution {
        status: Status::Optimal,
        objective,
        values,
        best_bound: objective,
        nodes: 1,
    })
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

enum Step {
    Flip(f64),
    Pivot { row: usize, theta: f64, to_upper: bool },
    Unbounded,
}

/// Dense tableau `B⁻¹A` over the internal equality form, minimizing `cost·x`.
struct Tableau {
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    position: Vec<usize>,
    cost: Vec<f64>,
    d: Vec<f64>,
    tol: Tolerances,
    pivots: usize,
    degenerate: usize,
    bland: bool,
    since_reinvert: usize,
}

impl Tableau {
    fn start_phase(&mut self) -> Result<(), SolverError> {
        self.degenerate = 0;
        self.bland = false;
        self.reinvert()
    }

    fn run(&mut self) -> Result<PhaseEnd, SolverError> {
        loop {
            match self.choose_entering() {
                None => {
                    // Confirm optimality on a freshly factorized tableau.
                    if self.since_reinvert == 0 {
                        return Ok(PhaseEnd::Optimal);
                    }
                    self.reinvert()?;
                    if self.choose_entering().is_none() {
                        return Ok(PhaseEnd::Optimal);
                    }
                }
                Some((j, dir)) => match self.ratio_test(j, dir) {
                    Step::Unbounded => return Ok(PhaseEnd::Unbounded),
                    Step::Flip(theta) => {
                        self.shift(j, dir, theta);
                        self.x[j] = if dir > 0.0 {
                            self.upper[j]
                        } else {
                            self.lower[j]
                        };
                        self.count_step(theta);
                    }
                    Step::Pivot {
                        row,
                        theta,
                        to_upper,
                    } => {
                        self.shift(j, dir, theta);
                        let leaving = self.basis[row];
                        self.x[leaving] = if to_upper {
                            self.upper[leaving]
                        } else {
                            self.lower[leaving]
                        };
                        self.pivot(row, j);
                        self.count_step(theta);
                        self.since_reinvert += 1;
                        if self.since_reinvert >= REINVERT_EVERY {
                            self.reinvert()?;
                        }
                    }
                },
            }
            self.pivots += 1;
            if self.pivots > MAX_PIVOTS {
                return Err(SolverError::IterationLimit(self.pivots));
            }
        }
    }

    fn count_step(&mut self, theta: f64) {
        if theta <= DEGENERATE_STEP {
            self.degenerate += 1;
            if self.degenerate > 5 * (self.m + self.n) {
                self.bland = true;
            }
        }
    }

    fn choose_entering(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n {
            if self.position[j] != NOT_BASIC || self.lower[j] == self.upper[j] {
                continue;
            }
            let dj = self.d[j];
            let (dir, score) = if dj < -self.tol.optimality && self.x[j] < self.upper[j] {
                (1.0, -dj)
            } else if dj > self.tol.optimality && self.x[j] > self.lower[j] {
                (-1.0, dj)
            } else {
                continue;
            };
            if self.bland {
                return Some((j, dir));
            }
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    fn ratio_test(&self, j: usize, dir: f64) -> Step {
        let mut best: Option<(usize, f64, bool, f64)> = None;
        for i in 0..self.m {
            let alpha = dir * self.t[i * self.n + j];
            let k = self.basis[i];
            let (theta, to_upper) = if alpha > self.tol.pivot && self.lower[k].is_finite() {
                ((self.x[k] - self.lower[k]).max(0.0) / alpha, false)
            } else if alpha < -self.tol.pivot && self.upper[k].is_finite() {
                ((self.upper[k] - self.x[k]).max(0.0) / -alpha, true)
            } else {
                continue;
            };
            let replace = match best {
                None => true,
                Some((bi, bt, _, ba)) => {
                    if theta < bt - DEGENERATE_STEP {
                        true
                    } else if theta <= bt + DEGENERATE_STEP {
                        if self.bland {
                            k < self.basis[bi]
                        } else {
                            alpha.abs() > ba
                        }
                    } else {
                        false
                    }
                }
            };
            if replace {
                best = Some((i, theta, to_upper, alpha.abs()));
            }
        }
        let flip = self.upper[j] - self.lower[j];
        match best {
            Some((row, theta, to_upper, _)) if theta < flip => Step::Pivot {
                row,
                theta,
                to_upper,
            },
            _ if flip.is_finite() => Step::Flip(flip),
            Some((row, theta, to_upper, _)) => Step::Pivot {
                row,
                theta,
                to_upper,
            },
            None => Step::Unbounded,
        }
    }

    fn shift(&mut self, j: usize, dir: f64, theta: f64) {
        if theta == 0.0 {
            return;
        }
        self.x[j] += dir * theta;
        for i in 0..self.m {
            let tij = self.t[i * self.n + j];
            if tij != 0.0 {
                self.x[self.basis[i]] -= dir * theta * tij;
            }
        }
    }

    fn pivot(&mut self, row: usize, j: usize) {
        let n = self.n;
        let piv = self.t[row * n + j];
        for v in &mut self.t[row * n..(row + 1) * n] {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = self.t[row * n..(row + 1) * n].to_vec();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let factor = self.t[i * n + j];
            if factor != 0.0 {
                for (v, p) in self.t[i * n..(i + 1) * n].iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                self.t[i * n + j] = 0.0;
            }
        }
        let dj = self.d[j];
        if dj != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= dj * p;
            }
            self.d[j] = 0.0;
        }
        let leaving = self.basis[row];
        self.position[leaving] = NOT_BASIC;
        self.position[j] = row;
        self.basis[row] = j;
    }

    /// Rebuilds `B⁻¹A`, the basic values and the reduced costs from the
    /// original data.
    fn reinvert(&mut self) -> Result<(), SolverError> {
        let (m, n) = (self.m, self.n);
        self.since_reinvert = 0;
        // Gauss-Jordan on [B | I].
        let mut bm = vec![0.0; m * m];
        for (c, &k) in self.basis.iter().enumerate() {
            for r in 0..m {
                bm[r * m + c] = self.a[r * n + k];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut p = col;
            let mut pv = bm[col * m + col].abs();
            for r in col + 1..m {
                let v = bm[r * m + col].abs();
                if v > pv {
                    p = r;
                    pv = v;
                }
            }
            if pv < 1e-12 {
                return Err(SolverError::SingularBasis);
            }
            if p != col {
                for c in 0..m {
                    bm.swap(p * m + c, col * m + c);
                    inv.swap(p * m + c, col * m + c);
                }
            }
            let d = bm[col * m + col];
            for c in 0..m {
                bm[col * m + c] /= d;
                inv[col * m + c] /= d;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = bm[r * m + col];
                if f != 0.0 {
                    for c in 0..m {
                        bm[r * m + c] -= f * bm[col * m + c];
                        inv[r * m + c] -= f * inv[col * m + c];
                    }
                }
            }
        }

        let mut t = vec![0.0; m * n];
        for r in 0..m {
            for k in 0..m {
                let f = inv[r * m + k];
                if f != 0.0 {
                    let (dst, src) = (&mut t[r * n..(r + 1) * n], &self.a[k * n..(k + 1) * n]);
                    for (v, a) in dst.iter_mut().zip(src) {
                        *v += f * a;
                    }
                }
            }
        }
        for (r, &k) in self.basis.iter().enumerate() {
            for c in 0..m {
                t[c * n + k] = if c == r { 1.0 } else { 0.0 };
            }
        }
        self.t = t;

        let mut resid = self.b.clone();
        for j in 0..n {
            if self.position[j] == NOT_BASIC && self.x[j] != 0.0 {
                for (r, v) in resid.iter_mut().enumerate() {
                    *v -= self.a[r * n + j] * self.x[j];
                }
            }
        }
        for r in 0..m {
            let v: f64 = (0..m).map(|k| inv[r * m + k] * resid[k]).sum();
            self.x[self.basis[r]] = v;
        }

        self.d = self.cost.clone();
        for (r, &k) in self.basis.iter().enumerate() {
            let cb = self.cost[k];
            if cb != 0.0 {
                for (dj, tv) in self.d.iter_mut().zip(&self.t[r * n..(r + 1) * n]) {
                    *dj -= cb * tv;
                }
            }
        }
        for &k in &self.basis {
            self.d[k] = 0.0;
        }
        Ok(())
    }
}
