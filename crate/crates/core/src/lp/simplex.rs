//! Bounded-variable primal and dual simplex on a dense, explicitly inverted
//! basis. Every row carries a slack column (`a.x + s = rhs`); phase one adds
//! artificial columns for rows whose slack cannot start feasible.

use super::{
    is_finite_bound, Basis, LinearProgram, LpSolution, LpStatus, ObjSense, RowSense, VarStatus, FEAS_TOL, INF,
    OPT_TOL, PIVOT_TOL,
};
use crate::error::{Error, Result};

const REINVERT_EVERY: usize = 100;
const BLAND_AFTER: usize = 50;
const DEGENERATE_STEP: f64 = 1e-12;
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum St {
    Basic,
    Lower,
    Upper,
    Free,
}

enum PrimalEnd {
    Optimal,
    Unbounded,
}

enum DualEnd {
    Feasible,
    Infeasible,
}

pub(crate) struct Solver<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    /// Structural columns, column-major (`acol[j * m + r]`).
    acol: Vec<f64>,
    art_row: Vec<usize>,
    art_sign: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    head: Vec<usize>,
    st: Vec<St>,
    x: Vec<f64>,
    /// Basis inverse, column-major (`binv[c * m + i]` is entry `(i, c)`).
    binv: Vec<f64>,
    since_reinvert: usize,
    iterations: usize,
    max_iter: usize,
}

impl<'a> Solver<'a> {
    pub(crate) fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut acol = vec![0.0; n * m];
        for (r, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                acol[j * m + r] += a;
            }
        }
        let mut lo = Vec::with_capacity(n + m);
        let mut up = Vec::with_capacity(n + m);
        for j in 0..n {
            lo.push(if lp.lower[j] <= -INF { -INF } else { lp.lower[j] });
            up.push(if lp.upper[j] >= INF { INF } else { lp.upper[j] });
        }
        for row in &lp.rows {
            let (l, u) = match row.sense {
                RowSense::Le => (0.0, INF),
                RowSense::Ge => (-INF, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            up.push(u);
        }
        let rhs = lp.rows.iter().map(|r| r.rhs).collect();
        let total = n + m;
        Self {
            lp,
            m,
            n,
            acol,
            art_row: Vec::new(),
            art_sign: Vec::new(),
            lo,
            up,
            cost: vec![0.0; total],
            rhs,
            head: Vec::with_capacity(m),
            st: vec![St::Lower; total],
            x: vec![0.0; total],
            binv: Vec::new(),
            since_reinvert: 0,
            iterations: 0,
            max_iter: 20_000 + 60 * (2 * m + n),
        }
    }

    fn ncols(&self) -> usize {
        self.n + self.m + self.art_row.len()
    }

    fn col_dot(&self, y: &[f64], j: usize) -> f64 {
        let m = self.m;
        if j < self.n {
            let c = &self.acol[j * m..(j + 1) * m];
            c.iter().zip(y).map(|(a, b)| a * b).sum()
        } else if j < self.n + m {
            y[j - self.n]
        } else {
            let t = j - self.n - m;
            self.art_sign[t] * y[self.art_row[t]]
        }
    }

    /// `B^{-1} A_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        let add = |r: usize, v: f64, out: &mut Vec<f64>| {
            let col = &self.binv[r * m..(r + 1) * m];
            for (o, b) in out.iter_mut().zip(col) {
                *o += v * b;
            }
        };
        if j < self.n {
            for r in 0..m {
                let v = self.acol[j * m + r];
                if v != 0.0 {
                    add(r, v, &mut out);
                }
            }
        } else if j < self.n + m {
            add(j - self.n, 1.0, &mut out);
        } else {
            let t = j - self.n - m;
            add(self.art_row[t], self.art_sign[t], &mut out);
        }
        out
    }

    /// Simplex multipliers `y = c_B' B^{-1}`.
    fn multipliers(&self) -> Vec<f64> {
        let m = self.m;
        let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        (0..m)
            .map(|r| self.binv[r * m..(r + 1) * m].iter().zip(&cb).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn reinvert(&mut self) -> Result<()> {
        let m = self.m;
        // Row-major copy of B augmented with the identity.
        let mut b = vec![0.0; m * m];
        for (c, &j) in self.head.iter().enumerate() {
            if j < self.n {
                for r in 0..m {
                    b[r * m + c] = self.acol[j * m + r];
                }
            } else if j < self.n + m {
                b[(j - self.n) * m + c] = 1.0;
            } else {
                let t = j - self.n - m;
                b[self.art_row[t] * m + c] = self.art_sign[t];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut p = col;
            let mut best = b[col * m + col].abs();
            for i in col + 1..m {
                let v = b[i * m + col].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < SINGULAR_TOL {
                return Err(Error::Numerical("singular basis matrix".into()));
            }
            if p != col {
                for c in 0..m {
                    b.swap(p * m + c, col * m + c);
                    inv.swap(p * m + c, col * m + c);
                }
            }
            let piv = b[col * m + col];
            for c in 0..m {
                b[col * m + c] /= piv;
                inv[col * m + c] /= piv;
            }
            for i in 0..m {
                if i == col {
                    continue;
                }
                let f = b[i * m + col];
                if f == 0.0 {
                    continue;
                }
                for c in 0..m {
                    b[i * m + c] -= f * b[col * m + c];
                    inv[i * m + c] -= f * inv[col * m + c];
                }
            }
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            for c in 0..m {
                self.binv[c * m + i] = inv[i * m + c];
            }
        }
        self.since_reinvert = 0;
        Ok(())
    }

    /// Recomputes basic values from the nonbasic ones.
    fn recompute_basic(&mut self) {
        let m = self.m;
        let mut r = self.rhs.clone();
        for j in 0..self.ncols() {
            if self.st[j] == St::Basic {
                continue;
            }
            let v = self.x[j];
            if v == 0.0 {
                continue;
            }
            if j < self.n {
                for (ri, a) in r.iter_mut().zip(&self.acol[j * m..(j + 1) * m]) {
                    *ri -= a * v;
                }
            } else if j < self.n + m {
                r[j - self.n] -= v;
            } else {
                let t = j - self.n - m;
                r[self.art_row[t]] -= self.art_sign[t] * v;
            }
        }
        let mut xb = vec![0.0; m];
        for (c, &rc) in r.iter().enumerate() {
            if rc == 0.0 {
                continue;
            }
            for (o, b) in xb.iter_mut().zip(&self.binv[c * m..(c + 1) * m]) {
                *o += rc * b;
            }
        }
        for (i, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[i];
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        for c in 0..m {
            let col = &mut self.binv[c * m..(c + 1) * m];
            let piv = col[r] / ar;
            if piv != 0.0 {
                for (i, v) in col.iter_mut().enumerate() {
                    if i != r {
                        *v -= alpha[i] * piv;
                    }
                }
            }
            col[r] = piv;
        }
        self.head[r] = q;
        self.st[q] = St::Basic;
        self.since_reinvert += 1;
    }

    fn bump_iteration(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.max_iter {
            return Err(Error::Numerical(format!("simplex iteration limit {} exceeded", self.max_iter)));
        }
        if self.since_reinvert >= REINVERT_EVERY {
            self.reinvert()?;
            self.recompute_basic();
        }
        Ok(())
    }

    fn primal(&mut self) -> Result<PrimalEnd> {
        let mut degenerate = 0usize;
        loop {
            self.bump_iteration()?;
            let y = self.multipliers();
            let bland = degenerate > BLAND_AFTER;
            let mut entering: Option<(usize, f64)> = None;
            let mut best_score = 0.0;
            for j in 0..self.ncols() {
                let s = self.st[j];
                if s == St::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let d = self.cost[j] - self.col_dot(&y, j);
                let dir = match s {
                    St::Lower if d < -OPT_TOL => 1.0,
                    St::Upper if d > OPT_TOL => -1.0,
                    St::Free if d.abs() > OPT_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(PrimalEnd::Optimal);
            };
            let alpha = self.ftran(q);

            let mut t_best = if is_finite_bound(self.lo[q]) && is_finite_bound(self.up[q]) {
                self.up[q] - self.lo[q]
            } else {
                INF
            };
            let mut leave: Option<(usize, St)> = None;
            let mut leave_piv = 0.0;
            for (i, &ai) in alpha.iter().enumerate() {
                let ai = dir * ai;
                if ai.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.head[i];
                let (t, bound) = if ai > 0.0 {
                    if !is_finite_bound(self.lo[j]) {
                        continue;
                    }
                    ((self.x[j] - self.lo[j]) / ai, St::Lower)
                } else {
                    if !is_finite_bound(self.up[j]) {
                        continue;
                    }
                    ((self.up[j] - self.x[j]) / -ai, St::Upper)
                };
                let t = t.max(0.0);
                let better = if t < t_best - 1e-12 {
                    true
                } else if t <= t_best + 1e-12 {
                    match leave {
                        None => true,
                        Some((li, _)) => {
                            if bland {
                                j < self.head[li]
                            } else {
                                ai.abs() > leave_piv
                            }
                        }
                    }
                } else {
                    false
                };
                if better {
                    t_best = t;
                    leave = Some((i, bound));
                    leave_piv = ai.abs();
                }
            }
            if leave.is_none() && t_best >= INF {
                return Ok(PrimalEnd::Unbounded);
            }
            if t_best <= DEGENERATE_STEP {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let step = dir * t_best;
            if step != 0.0 {
                self.x[q] += step;
                for (i, &ai) in alpha.iter().enumerate() {
                    let j = self.head[i];
                    self.x[j] -= step * ai;
                }
            }
            match leave {
                None => {
                    // Bound flip of the entering variable.
                    if dir > 0.0 {
                        self.st[q] = St::Upper;
                        self.x[q] = self.up[q];
                    } else {
                        self.st[q] = St::Lower;
                        self.x[q] = self.lo[q];
                    }
                }
                Some((r, bound)) => {
                    let jl = self.head[r];
                    self.x[jl] = if bound == St::Lower { self.lo[jl] } else { self.up[jl] };
                    self.pivot(r, q, &alpha);
                    self.st[jl] = bound;
                }
            }
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] - FEAS_TOL {
            self.lo[j] - v
        } else if v > self.up[j] + FEAS_TOL {
            v - self.up[j]
        } else {
            0.0
        }
    }

    fn dual(&mut self) -> Result<DualEnd> {
        let m = self.m;
        loop {
            self.bump_iteration()?;
            let mut r_best = None;
            let mut worst = 0.0;
            for (i, &j) in self.head.iter().enumerate() {
                let inf = self.infeasibility(j);
                if inf > worst {
                    worst = inf;
                    r_best = Some(i);
                }
            }
            let Some(r) = r_best else {
                return Ok(DualEnd::Feasible);
            };
            let jl = self.head[r];
            let increase = self.x[jl] < self.lo[jl];
            let rho: Vec<f64> = (0..m).map(|c| self.binv[c * m + r]).collect();
            let y = self.multipliers();
            let mut entering = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_piv = 0.0;
            for j in 0..self.ncols() {
                let s = self.st[j];
                if s == St::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let arj = self.col_dot(&rho, j);
                if arj.abs() <= PIVOT_TOL {
                    continue;
                }
                let ok = match s {
                    St::Lower => (arj < 0.0) == increase,
                    St::Upper => (arj > 0.0) == increase,
                    St::Free => true,
                    St::Basic => false,
                };
                if !ok {
                    continue;
                }
                let d = self.cost[j] - self.col_dot(&y, j);
                let ratio = d.abs() / arj.abs();
                if ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && arj.abs() > best_piv) {
                    best_ratio = ratio;
                    best_piv = arj.abs();
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return Ok(DualEnd::Infeasible);
            };
            let alpha = self.ftran(q);
            let target = if increase { self.lo[jl] } else { self.up[jl] };
            let delta = (self.x[jl] - target) / alpha[r];
            self.x[q] += delta;
            for (i, &ai) in alpha.iter().enumerate() {
                let j = self.head[i];
                self.x[j] -= delta * ai;
            }
            self.x[jl] = target;
            self.pivot(r, q, &alpha);
            self.st[jl] = if increase { St::Lower } else { St::Upper };
        }
    }

    fn set_phase2_costs(&mut self) {
        let sign = match self.lp.sense {
            ObjSense::Minimize => 1.0,
            ObjSense::Maximize => -1.0,
        };
        self.cost = vec![0.0; self.ncols()];
        for j in 0..self.n {
            self.cost[j] = sign * self.lp.objective[j];
        }
    }

    fn place_nonbasic(&mut self, j: usize) {
        let (l, u) = (self.lo[j], self.up[j]);
        let (s, v) = if is_finite_bound(l) {
            (St::Lower, l)
        } else if is_finite_bound(u) {
            (St::Upper, u)
        } else {
            (St::Free, 0.0)
        };
        self.st[j] = s;
        self.x[j] = v;
    }

    pub(crate) fn run_cold(mut self) -> Result<LpSolution> {
        let (n, m) = (self.n, self.m);
        for j in 0..n {
            self.place_nonbasic(j);
        }
        let mut act = vec![0.0; m];
        for j in 0..n {
            let v = self.x[j];
            if v != 0.0 {
                for (r, a) in act.iter_mut().enumerate() {
                    *a += self.acol[j * m + r] * v;
                }
            }
        }
        self.head.clear();
        for r in 0..m {
            let s = n + r;
            let res = self.rhs[r] - act[r];
            if res >= self.lo[s] && res <= self.up[s] {
                self.st[s] = St::Basic;
                self.x[s] = res;
                self.head.push(s);
            } else {
                let sv = if res < self.lo[s] { self.lo[s] } else { self.up[s] };
                self.st[s] = if res < self.lo[s] { St::Lower } else { St::Upper };
                self.x[s] = sv;
                let sign = if res - sv >= 0.0 { 1.0 } else { -1.0 };
                let col = n + m + self.art_row.len();
                self.art_row.push(r);
                self.art_sign.push(sign);
                self.lo.push(0.0);
                self.up.push(INF);
                self.st.push(St::Basic);
                self.x.push((res - sv).abs());
                self.head.push(col);
            }
        }
        self.reinvert()?;
        if !self.art_row.is_empty() {
            self.cost = vec![0.0; self.ncols()];
            for c in n + m..self.ncols() {
                self.cost[c] = 1.0;
            }
            self.primal()?;
            self.reinvert()?;
            self.recompute_basic();
            let infeas: f64 = (n + m..self.ncols()).map(|c| self.x[c].max(0.0)).sum();
            let scale = self.rhs.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
            if infeas > FEAS_TOL * scale {
                return Ok(self.finish(LpStatus::Infeasible));
            }
            for c in n + m..self.ncols() {
                self.up[c] = 0.0;
                if self.st[c] != St::Basic {
                    self.st[c] = St::Lower;
                    self.x[c] = 0.0;
                }
            }
            self.drive_out_artificials();
            self.recompute_basic();
        }
        self.set_phase2_costs();
        self.optimize()
    }

    /// Pivots zero-valued basic artificials out in favour of real columns.
    fn drive_out_artificials(&mut self) {
        let (n, m) = (self.n, self.m);
        for r in 0..m {
            if self.head[r] < n + m {
                continue;
            }
            let rho: Vec<f64> = (0..m).map(|c| self.binv[c * m + r]).collect();
            let mut best = None;
            let mut best_abs = 1e-7;
            for j in 0..n + m {
                if self.st[j] == St::Basic {
                    continue;
                }
                let v = self.col_dot(&rho, j).abs();
                if v > best_abs {
                    best_abs = v;
                    best = Some(j);
                }
            }
            if let Some(q) = best {
                let alpha = self.ftran(q);
                let art = self.head[r];
                self.pivot(r, q, &alpha);
                self.st[art] = St::Lower;
                self.x[art] = 0.0;
            }
        }
        let _ = self.reinvert();
    }

    /// Phase two from a primal feasible basis, with a dual clean-up pass if
    /// reinversion reveals drift.
    fn optimize(mut self) -> Result<LpSolution> {
        for _ in 0..3 {
            match self.primal()? {
                PrimalEnd::Unbounded => return Ok(self.finish(LpStatus::Unbounded)),
                PrimalEnd::Optimal => {}
            }
            self.reinvert()?;
            self.recompute_basic();
            if self.head.iter().all(|&j| self.infeasibility(j) == 0.0) {
                return Ok(self.finish(LpStatus::Optimal));
            }
            if let DualEnd::Infeasible = self.dual()? {
                return Ok(self.finish(LpStatus::Infeasible));
            }
        }
        Err(Error::Numerical("simplex failed to settle on a feasible optimum".into()))
    }

    pub(crate) fn run_warm(mut self, basis: &Basis) -> Result<LpSolution> {
        let (n, m) = (self.n, self.m);
        if basis.structural.len() != n || basis.slack.len() > m {
            return self.restart_cold();
        }
        let to_st = |v: VarStatus| match v {
            VarStatus::Basic => St::Basic,
            VarStatus::AtLower => St::Lower,
            VarStatus::AtUpper => St::Upper,
            VarStatus::Free => St::Free,
        };
        for j in 0..n {
            self.st[j] = to_st(basis.structural[j]);
        }
        for r in 0..m {
            self.st[n + r] = basis.slack.get(r).map_or(St::Basic, |&v| to_st(v));
        }
        self.head = (0..n + m).filter(|&j| self.st[j] == St::Basic).collect();
        if self.head.len() != m {
            return self.restart_cold();
        }
        for j in 0..n + m {
            let s = self.st[j];
            if s == St::Basic {
                continue;
            }
            let (l, u) = (self.lo[j], self.up[j]);
            let (s, v) = match s {
                St::Lower if is_finite_bound(l) => (St::Lower, l),
                St::Upper if is_finite_bound(u) => (St::Upper, u),
                _ if is_finite_bound(l) => (St::Lower, l),
                _ if is_finite_bound(u) => (St::Upper, u),
                _ => (St::Free, 0.0),
            };
            self.st[j] = s;
            self.x[j] = v;
        }
        if self.reinvert().is_err() {
            return self.restart_cold();
        }
        self.recompute_basic();
        self.set_phase2_costs();
        let primal_ok = self.head.iter().all(|&j| self.infeasibility(j) == 0.0);
        if !primal_ok {
            if !self.dual_feasible() {
                return self.restart_cold();
            }
            match self.dual() {
                Ok(DualEnd::Feasible) => {}
                Ok(DualEnd::Infeasible) => return Ok(self.finish(LpStatus::Infeasible)),
                Err(_) => return self.restart_cold(),
            }
        }
        let lp = self.lp;
        match self.optimize() {
            Ok(s) => Ok(s),
            Err(_) => Solver::new(lp).run_cold(),
        }
    }

    fn restart_cold(self) -> Result<LpSolution> {
        Solver::new(self.lp).run_cold()
    }

    fn dual_feasible(&self) -> bool {
        let y = self.multipliers();
        (0..self.ncols()).all(|j| {
            let s = self.st[j];
            if s == St::Basic || self.lo[j] == self.up[j] {
                return true;
            }
            let d = self.cost[j] - self.col_dot(&y, j);
            match s {
                St::Lower => d >= -OPT_TOL,
                St::Upper => d <= OPT_TOL,
                St::Free => d.abs() <= OPT_TOL,
                St::Basic => true,
            }
        })
    }

    fn finish(self, status: LpStatus) -> LpSolution {
        let (n, m) = (self.n, self.m);
        let sign = match self.lp.sense {
            ObjSense::Minimize => 1.0,
            ObjSense::Maximize => -1.0,
        };
        let x: Vec<f64> = self.x[..n].to_vec();
        let (duals, reduced_costs, basis) = if status == LpStatus::Optimal {
            let y = self.multipliers();
            let rc: Vec<f64> = (0..n).map(|j| sign * (self.cost[j] - self.col_dot(&y, j))).collect();
            let to_vs = |s: St| match s {
                St::Basic => VarStatus::Basic,
                St::Lower => VarStatus::AtLower,
                St::Upper => VarStatus::AtUpper,
                St::Free => VarStatus::Free,
            };
            let basis = if self.head.iter().all(|&j| j < n + m) {
                Some(Basis {
                    structural: self.st[..n].iter().map(|&s| to_vs(s)).collect(),
                    slack: self.st[n..n + m].iter().map(|&s| to_vs(s)).collect(),
                })
            } else {
                None
            };
            (y.iter().map(|v| sign * v).collect(), rc, basis)
        } else {
            (vec![0.0; m], vec![0.0; n], None)
        };
        let objective = match status {
            LpStatus::Optimal => self.lp.objective_value(&x),
            LpStatus::Infeasible => f64::NAN,
            LpStatus::Unbounded => match self.lp.sense {
                ObjSense::Minimize => f64::NEG_INFINITY,
                ObjSense::Maximize => f64::INFINITY,
            },
        };
        LpSolution { status, x, objective, duals, reduced_costs, basis, iterations: self.iterations }
    }
}
