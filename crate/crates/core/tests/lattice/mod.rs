//! Exact maximum of the EE over a lattice of spectra (step `h` in every
//! eigenvalue, splitting factor from the harvesting-active closed form),
//! found by best-first branch and bound on index boxes. Every formula is
//! restated here so the oracle shares no code with the library.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use twr_ee::{ChannelGains, NetworkConfig, ALPHA_MIN};

pub struct Oracle<'a> {
    pub g: &'a ChannelGains,
    pub cfg: &'a NetworkConfig,
    pub h: f64,
}

/// Up to two modes: six eigenvalues.
const VARS: usize = 6;

/// Inclusive index ranges, order q1[0..n], q2[0..n], r[0..n]; `hi`
/// starts at `VARS`.
struct Cell {
    idx: [u16; 2 * VARS],
    bound: f64,
}

impl Cell {
    fn lo(&self) -> &[u16] {
        &self.idx[..VARS]
    }
    fn hi(&self) -> &[u16] {
        &self.idx[VARS..]
    }
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.bound == o.bound
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cell {
    fn cmp(&self, o: &Self) -> Ordering {
        self.bound.total_cmp(&o.bound)
    }
}

pub struct Best {
    pub ee: f64,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub r: Vec<f64>,
    pub alpha: f64,
    pub cells: usize,
    /// Upper bound on the lattice maximum when the search stopped.
    pub ceiling: f64,
}

impl Oracle<'_> {
    fn n(&self) -> usize {
        self.g.h1.len()
    }

    fn rate_to_1(&self, q2: &[f64], r: &[f64], a: f64) -> f64 {
        let c = self.cfg;
        (0..self.n())
            .map(|i| {
                let (h1, h2) = (self.g.h1[i], self.g.h2[i]);
                let s = a * r[i] * q2[i] * h1 * h2;
                (1.0 + s / (c.sigma2_d + a * c.sigma2_1 + a * c.sigma2_r * r[i] * h1)).log2()
            })
            .sum::<f64>()
            / 2.0
    }

    fn rate_to_2(&self, q1: &[f64], r: &[f64]) -> f64 {
        let c = self.cfg;
        (0..self.n())
            .map(|i| {
                let (h1, h2) = (self.g.h1[i], self.g.h2[i]);
                (1.0 + r[i] * q1[i] * h1 * h2 / (c.sigma2_2 + c.sigma2_r * r[i] * h2)).log2()
            })
            .sum::<f64>()
            / 2.0
    }

    fn relay(&self, q1: &[f64], q2: &[f64], r: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| r[i] * (q2[i] * self.g.h2[i] + q1[i] * self.g.h1[i] + self.cfg.sigma2_r))
            .sum()
    }

    fn received(&self, q1: &[f64], q2: &[f64], r: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| {
                self.g.h1[i]
                    * r[i]
                    * (q2[i] * self.g.h2[i] + q1[i] * self.g.h1[i] + self.cfg.sigma2_r)
            })
            .sum::<f64>()
            + self.cfg.sigma2_1
    }

    fn spent(&self, q1: &[f64], q2: &[f64], r: &[f64]) -> f64 {
        let c = self.cfg;
        q1.iter().sum::<f64>() / c.xi_1
            + self.relay(q1, q2, r) / c.xi_r
            + q2.iter().sum::<f64>() / c.xi_2
            + c.pc_total
    }

    /// Raw splitting factor that makes harvesting exactly cover TR1.
    fn raw_alpha(&self, q1_sum: f64, received: f64) -> f64 {
        1.0 - (q1_sum + self.cfg.p1_ct + self.cfg.p1_cr) / (self.cfg.eh_efficiency * received)
    }

    fn split(&self, idx: &[u16]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n();
        let v: Vec<f64> = idx.iter().map(|&k| k as f64 * self.h).collect();
        (v[..n].to_vec(), v[n..2 * n].to_vec(), v[2 * n..].to_vec())
    }

    /// EE at a lattice point, `None` when infeasible.
    fn point(&self, idx: &[u16]) -> Option<(f64, f64)> {
        let c = self.cfg;
        let (q1, q2, r) = self.split(idx);
        let slack = 1e-9;
        if q1.iter().sum::<f64>() > c.p1_max + slack
            || q2.iter().sum::<f64>() > c.p2_max + slack
            || self.relay(&q1, &q2, &r) > c.pr_max + slack
        {
            return None;
        }
        let raw = self.raw_alpha(q1.iter().sum(), self.received(&q1, &q2, &r));
        if raw < ALPHA_MIN {
            return None;
        }
        let a = raw.min(1.0 - ALPHA_MIN);
        let (r1, r2) = (self.rate_to_1(&q2, &r, a), self.rate_to_2(&q1, &r));
        if r1 < c.rt_min / 2.0 || r2 < c.rt_min / 2.0 {
            return None;
        }
        Some(((r1 + r2) / self.spent(&q1, &q2, &r), a))
    }

    /// Upper bound on the EE of every feasible lattice point in the
    /// cell, `None` when the cell holds no feasible point. Rates grow in
    /// every eigenvalue and in alpha, power grows in every eigenvalue,
    /// and the raw alpha grows in q2 and r.
    fn bound(&self, lo: &[u16], hi: &[u16]) -> Option<f64> {
        let c = self.cfg;
        let (q1l, q2l, rl) = self.split(lo);
        let (q1h, q2h, rh) = self.split(hi);
        if q1l.iter().sum::<f64>() > c.p1_max + 1e-9
            || q2l.iter().sum::<f64>() > c.p2_max + 1e-9
            || self.relay(&q1l, &q2l, &rl) > c.pr_max + 1e-9
        {
            return None;
        }
        let raw = self.raw_alpha(q1l.iter().sum(), self.received(&q1h, &q2h, &rh));
        if raw < ALPHA_MIN {
            return None;
        }
        let a = raw.min(1.0 - ALPHA_MIN);
        let (r1, r2) = (self.rate_to_1(&q2h, &rh, a), self.rate_to_2(&q1h, &rh));
        if r1 < c.rt_min / 2.0 || r2 < c.rt_min / 2.0 {
            return None;
        }
        Some((r1 + r2) / self.spent(&q1l, &q2l, &rl))
    }

    /// Upper bound on `N - mu * D` over the cell, where `N` is the sum rate
    /// and `D` the consumed power. Rates are taken at the top of the relay
    /// range and power at its bottom; with r pinned the remainder is
    /// concave and separable in each transmit eigenvalue, so each one is
    /// maximized exactly by a clipped water level.
    fn excess(&self, lo: &[u16], hi: &[u16], mu: f64) -> f64 {
        let (n, c) = (self.n(), self.cfg);
        let (q1l, q2l, rl) = self.split(lo);
        let (q1h, q2h, rh) = self.split(hi);
        let raw = self.raw_alpha(q1l.iter().sum(), self.received(&q1h, &q2h, &rh));
        let a = raw.min(1.0 - ALPHA_MIN);
        let level = |gain: f64, price: f64, lo: f64, hi: f64| {
            let q = if gain > 0.0 {
                (0.5 / (price * std::f64::consts::LN_2) - 1.0 / gain).clamp(lo, hi)
            } else {
                lo
            };
            0.5 * (gain * q).ln_1p() / std::f64::consts::LN_2 - price * q
        };
        let mut total = -mu * c.pc_total;
        for i in 0..n {
            let (h1, h2) = (self.g.h1[i], self.g.h2[i]);
            let g1 =
                a * rh[i] * h1 * h2 / (c.sigma2_d + a * c.sigma2_1 + a * c.sigma2_r * rh[i] * h1);
            let g2 = rh[i] * h1 * h2 / (c.sigma2_2 + c.sigma2_r * rh[i] * h2);
            total += level(
                g1,
                mu * (1.0 / c.xi_2 + rl[i] * h2 / c.xi_r),
                q2l[i],
                q2h[i],
            );
            total += level(
                g2,
                mu * (1.0 / c.xi_1 + rl[i] * h1 / c.xi_r),
                q1l[i],
                q1h[i],
            );
            total -= mu * rl[i] * c.sigma2_r / c.xi_r;
        }
        total
    }

    /// Shrinks the upper corner so no coordinate exceeds what the power caps
    /// allow given the lower corner of the others. `false` when the box
    /// holds no point within the caps.
    fn tighten(&self, idx: &mut [u16; 2 * VARS]) -> bool {
        let (n, c, h) = (self.n(), self.cfg, self.h);
        let cap = |v: f64| {
            if v < 0.0 {
                -1.0
            } else {
                (v / h + 1e-9).floor()
            }
        };
        for _ in 0..2 {
            let (q1l, q2l, rl) = self.split(&idx[..VARS]);
            let mut lim = [f64::INFINITY; VARS];
            for i in 0..n {
                let others = |v: &[f64]| v.iter().sum::<f64>() - v[i];
                lim[i] = cap(c.p1_max - others(&q1l));
                lim[n + i] = cap(c.p2_max - others(&q2l));
                let rest = self.relay(&q1l, &q2l, &rl)
                    - rl[i] * (q2l[i] * self.g.h2[i] + q1l[i] * self.g.h1[i] + c.sigma2_r);
                let per = q2l[i] * self.g.h2[i] + q1l[i] * self.g.h1[i] + c.sigma2_r;
                lim[2 * n + i] = cap((c.pr_max - rest) / per);
                // r also scales the q's: bound them through the relay cap
                if rl[i] > 0.0 {
                    let room = (c.pr_max - rest) / rl[i] - c.sigma2_r;
                    let q1room = room - q2l[i] * self.g.h2[i];
                    let q2room = room - q1l[i] * self.g.h1[i];
                    lim[i] = lim[i].min(cap(q1room / self.g.h1[i]));
                    lim[n + i] = lim[n + i].min(cap(q2room / self.g.h2[i]));
                }
            }
            for k in 0..VARS {
                if lim[k] < idx[k] as f64 {
                    return false;
                }
                if lim[k] < idx[VARS + k] as f64 {
                    idx[VARS + k] = lim[k] as u16;
                }
            }
        }
        true
    }

    /// Best-first search. A cell is discarded once its bound drops to
    /// `max(incumbent * (1 + rel_gap), floor)`, so on return no lattice
    /// point exceeds `ceiling`. A `floor` above the optimum turns the search
    /// into a proof that nothing on the lattice beats it.
    pub fn search(&self, rel_gap: f64, floor: f64) -> Best {
        let n = self.n();
        assert!(3 * n == VARS, "the lattice oracle handles two modes");
        let c = self.cfg;
        let top = |cap: f64| {
            u16::try_from((cap / self.h + 1e-9).floor() as u64).expect("lattice fits u16")
        };
        let tops = [top(c.p1_max), top(c.p2_max), top(c.pr_max / c.sigma2_r)];
        let mut idx = [0u16; 2 * VARS];
        for k in 0..VARS {
            idx[VARS + k] = tops[k / n];
        }

        let mut best = Best {
            ee: 0.0,
            q1: vec![0.0; n],
            q2: vec![0.0; n],
            r: vec![0.0; n],
            alpha: f64::NAN,
            cells: 0,
            ceiling: f64::INFINITY,
        };
        let prune = |ee: f64| (ee * (1.0 + rel_gap)).max(floor);
        let mut heap = BinaryHeap::new();
        if self.tighten(&mut idx) {
            if let Some(bound) = self.bound(&idx[..VARS], &idx[VARS..]) {
                heap.push(Cell { idx, bound });
            }
        }
        while let Some(cell) = heap.pop() {
            best.cells += 1;
            if cell.bound <= prune(best.ee) {
                break;
            }
            let (lo, hi) = (cell.lo(), cell.hi());
            if self.excess(lo, hi, prune(best.ee)) <= 0.0 {
                continue;
            }
            let mid: Vec<u16> = lo.iter().zip(hi).map(|(a, b)| a + (b - a) / 2).collect();
            if let Some((ee, a)) = self.point(&mid) {
                if ee > best.ee {
                    let (q1, q2, r) = self.split(&mid);
                    best = Best {
                        ee,
                        q1,
                        q2,
                        r,
                        alpha: a,
                        ..best
                    };
                }
            }
            let Some(k) = (0..VARS)
                .filter(|&k| hi[k] > lo[k])
                .max_by_key(|&k| hi[k] - lo[k])
            else {
                continue;
            };
            let cut = lo[k] + (hi[k] - lo[k]) / 2;
            let mut left = cell.idx;
            left[VARS + k] = cut;
            let mut right = cell.idx;
            right[k] = cut + 1;
            for mut child in [left, right] {
                if !self.tighten(&mut child) {
                    continue;
                }
                if let Some(bound) = self.bound(&child[..VARS], &child[VARS..]) {
                    let mu = prune(best.ee);
                    if bound > mu && self.excess(&child[..VARS], &child[VARS..], mu) > 0.0 {
                        heap.push(Cell { idx: child, bound });
                    }
                }
            }
        }
        // pruned cells were only known to stay below this
        best.ceiling = prune(best.ee);
        best
    }
}
