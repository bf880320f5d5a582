//! Wave-front tracking with a point constraint at `x = 0`.
//!
//! Fronts live in a slab and form a doubly linked list ordered by position.
//! Pending collisions and exit hits sit in a binary heap; entries are
//! invalidated lazily when one of their fronts dies. All fronts meeting at
//! one point are resolved together by a single Riemann problem, constrained
//! when the point is the exit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{BellFlux, PiecewiseLinearFlux};
use crate::profile::DensityProfile;
use crate::riemann::{classical_fronts, constrained_fronts, FrontKind, WaveFront};

/// Relative spatial tolerance for grouping fronts into one interaction.
pub const CLUSTER_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
struct Front {
    x0: f64,
    t0: f64,
    speed: f64,
    left: usize,
    right: usize,
    kind: FrontKind,
    prev: Option<usize>,
    next: Option<usize>,
    alive: bool,
}

impl Front {
    #[inline]
    fn pos(&self, t: f64) -> f64 {
        if self.speed == 0.0 {
            self.x0
        } else {
            self.x0 + self.speed * (t - self.t0)
        }
    }

    fn wave(&self) -> WaveFront {
        WaveFront { speed: self.speed, left: self.left, right: self.right, kind: self.kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    Pair(usize, usize),
    Hit(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    x: f64,
    seq: u64,
    what: Pending,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: the heap pops the earliest, then leftmost, then oldest event
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.x.total_cmp(&self.x)).then(other.seq.cmp(&self.seq))
    }
}

/// What triggered an interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Collision,
    ExitHit,
    /// Re-solve at the exit after a change of the constraint level.
    LevelChange,
}

/// One resolved interaction: the fronts that met and the fronts that left.
#[derive(Debug, Clone)]
pub struct Interaction {
    pub time: f64,
    pub x: f64,
    pub cause: Cause,
    pub at_exit: bool,
    pub incoming: Vec<WaveFront>,
    pub outgoing: Vec<WaveFront>,
    /// Outer states of the interaction, as node indices.
    pub left: usize,
    pub right: usize,
    /// Constraint level in force.
    pub level: f64,
}

impl Interaction {
    pub fn is_noop(&self) -> bool {
        self.incoming == self.outgoing
    }
}

/// Polygonal path of a front from creation to death (or the end of the run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPath {
    pub id: usize,
    pub t_start: f64,
    pub x_start: f64,
    pub t_end: f64,
    pub x_end: f64,
    pub rho_left: f64,
    pub rho_right: f64,
    pub kind: FrontKind,
}

/// Snapshot of a live front at the current time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontView {
    pub id: usize,
    pub x: f64,
    pub wave: WaveFront,
}

pub struct Tracker {
    flux: PiecewiseLinearFlux,
    fronts: Vec<Front>,
    head: Option<usize>,
    tail: Option<usize>,
    left_tail: usize,
    now: f64,
    level: f64,
    queue: BinaryHeap<Event>,
    seq: u64,
    paths: Vec<FrontPath>,
    record_paths: bool,
}

impl Tracker {
    /// Solves the Riemann problem at every jump of `rho0` at time zero.
    /// States must be nodes of `flux`; jumps at `x = 0` use the level `level`.
    pub fn new(flux: PiecewiseLinearFlux, rho0: &DensityProfile, level: f64) -> Result<Self> {
        let left_tail = flux.require_node(rho0.values()[0])?;
        let mut tr = Self {
            flux,
            fronts: Vec::new(),
            head: None,
            tail: None,
            left_tail,
            now: 0.0,
            level,
            queue: BinaryHeap::new(),
            seq: 0,
            paths: Vec::new(),
            record_paths: true,
        };
        let mut prev_state = left_tail;
        for (&x, &v) in rho0.breakpoints().iter().zip(&rho0.values()[1..]) {
            let r = tr.flux.require_node(v)?;
            let waves = if x == 0.0 {
                constrained_fronts(&tr.flux, prev_state, r, level)?
            } else {
                classical_fronts(&tr.flux, prev_state, r)
            };
            for w in waves {
                tr.push_back(w, x, 0.0);
            }
            prev_state = r;
        }
        if !rho0.breakpoints().contains(&0.0) {
            // a flux above the level across a continuous exit state also needs a queue
            tr.resolve_at_exit(level, Cause::LevelChange)?;
        }
        let mut cur = tr.head;
        while let Some(i) = cur {
            tr.schedule_around(i);
            cur = tr.fronts[i].next;
        }
        Ok(tr)
    }

    pub fn set_record_paths(&mut self, on: bool) {
        self.record_paths = on;
    }

    pub fn flux(&self) -> &PiecewiseLinearFlux {
        &self.flux
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn front_count(&self) -> usize {
        self.iter_ids().count()
    }

    fn iter_ids(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.head, move |&i| self.fronts[i].next)
    }

    /// Live fronts ordered left to right, positions at the current time.
    pub fn fronts(&self) -> impl Iterator<Item = FrontView> + '_ {
        self.iter_ids().map(move |i| {
            let f = &self.fronts[i];
            FrontView { id: i, x: f.pos(self.now), wave: f.wave() }
        })
    }

    pub fn left_tail(&self) -> usize {
        self.left_tail
    }

    pub fn right_tail(&self) -> usize {
        self.tail.map_or(self.left_tail, |i| self.fronts[i].right)
    }

    fn push_back(&mut self, w: WaveFront, x: f64, t: f64) -> usize {
        let id = self.fronts.len();
        self.fronts.push(Front {
            x0: x,
            t0: t,
            speed: w.speed,
            left: w.left,
            right: w.right,
            kind: w.kind,
            prev: self.tail,
            next: None,
            alive: true,
        });
        match self.tail {
            Some(t) => self.fronts[t].next = Some(id),
            None => self.head = Some(id),
        }
        self.tail = Some(id);
        id
    }

    fn kill(&mut self, i: usize) {
        let (t, now) = (self.fronts[i].t0, self.now);
        let f = &mut self.fronts[i];
        f.alive = false;
        if self.record_paths {
            let path = FrontPath {
                id: i,
                t_start: t,
                x_start: f.x0,
                t_end: now,
                x_end: f.pos(now),
                rho_left: self.flux.rho(f.left),
                rho_right: self.flux.rho(f.right),
                kind: f.kind,
            };
            self.paths.push(path);
        }
    }

    fn schedule(&mut self, time: f64, x: f64, what: Pending) {
        self.seq += 1;
        self.queue.push(Event { time: time.max(self.now), x, seq: self.seq, what });
    }

    fn schedule_pair(&mut self, a: usize, b: usize) {
        let (fa, fb) = (&self.fronts[a], &self.fronts[b]);
        if !(fa.speed > fb.speed) {
            return;
        }
        let t_ref = fa.t0.max(fb.t0).max(self.now);
        let gap = (fb.pos(t_ref) - fa.pos(t_ref)).max(0.0);
        let t = t_ref + gap / (fa.speed - fb.speed);
        let x = fa.pos(t);
        self.schedule(t, x, Pending::Pair(a, b));
    }

    fn schedule_hit(&mut self, i: usize) {
        let f = &self.fronts[i];
        let x = f.pos(self.now);
        if (x < 0.0 && f.speed > 0.0) || (x > 0.0 && f.speed < 0.0) {
            let t = f.t0 - f.x0 / f.speed;
            self.schedule(t, 0.0, Pending::Hit(i));
        }
    }

    fn schedule_around(&mut self, i: usize) {
        if let Some(n) = self.fronts[i].next {
            self.schedule_pair(i, n);
        }
        self.schedule_hit(i);
    }

    fn valid(&self, e: &Event) -> bool {
        match e.what {
            Pending::Pair(a, b) => self.fronts[a].alive && self.fronts[b].alive && self.fronts[a].next == Some(b),
            Pending::Hit(i) => self.fronts[i].alive,
        }
    }

    /// Time of the next pending interaction, if any.
    pub fn peek_time(&mut self) -> Option<f64> {
        while let Some(e) = self.queue.peek() {
            if self.valid(e) {
                return Some(e.time);
            }
            self.queue.pop();
        }
        None
    }

    /// Moves the clock forward without processing events.
    pub fn set_time(&mut self, t: f64) -> Result<()> {
        if t < self.now {
            return Err(Error::Internal(format!("time regression from {} to {t}", self.now)));
        }
        if let Some(te) = self.peek_time() {
            if te < t {
                return Err(Error::Internal(format!("skipping pending event at {te} while advancing to {t}")));
            }
        }
        self.now = t;
        Ok(())
    }

    /// Changes the constraint level used at subsequent exit interactions.
    pub fn set_level(&mut self, level: f64) {
        self.level = level;
    }

    /// Processes the earliest pending interaction.
    pub fn step(&mut self) -> Result<Option<Interaction>> {
        if self.peek_time().is_none() {
            return Ok(None);
        }
        let e = self.queue.pop().unwrap();
        if e.time < self.now {
            return Err(Error::Internal(format!("event at {} precedes the clock {}", e.time, self.now)));
        }
        self.now = e.time;
        let (x, cause) = match e.what {
            Pending::Pair(a, _) => (self.fronts[a].pos(e.time), Cause::Collision),
            Pending::Hit(_) => (0.0, Cause::ExitHit),
        };
        let seed = match e.what {
            Pending::Pair(a, _) => Some(a),
            Pending::Hit(i) => Some(i),
        };
        self.resolve_cluster(x, seed, cause).map(Some)
    }

    /// Re-solves the exit with a new level at the current time. Returns `None`
    /// when the local solution is unchanged.
    pub fn resolve_at_exit(&mut self, level: f64, cause: Cause) -> Result<Option<Interaction>> {
        self.level = level;
        let it = self.resolve_cluster(0.0, None, cause)?;
        Ok(if it.is_noop() { None } else { Some(it) })
    }

    fn resolve_cluster(&mut self, x: f64, seed: Option<usize>, cause: Cause) -> Result<Interaction> {
        let tol = CLUSTER_TOL * x.abs().max(1.0);
        let at_exit = x.abs() <= tol;
        let x = if at_exit { 0.0 } else { x };
        let now = self.now;
        let near = |f: &Front| (f.pos(now) - x).abs() <= tol;

        // locate the contiguous run of fronts at x
        let start = match seed.filter(|&s| near(&self.fronts[s])) {
            Some(s) => Some(s),
            None => self.iter_ids().find(|&i| near(&self.fronts[i])),
        };
        let (mut first, mut last) = (start, start);
        if let Some(s) = start {
            let mut a = s;
            while let Some(p) = self.fronts[a].prev.filter(|&p| near(&self.fronts[p])) {
                a = p;
            }
            let mut b = s;
            while let Some(n) = self.fronts[b].next.filter(|&n| near(&self.fronts[n])) {
                b = n;
            }
            first = Some(a);
            last = Some(b);
        }

        let (before, after) = match (first, last) {
            (Some(a), Some(b)) => (self.fronts[a].prev, self.fronts[b].next),
            _ => {
                // nothing at x: insertion point by position
                let after = self.iter_ids().find(|&i| self.fronts[i].pos(now) > x);
                let before = match after {
                    Some(n) => self.fronts[n].prev,
                    None => self.tail,
                };
                (before, after)
            }
        };
        let left = before.map_or(self.left_tail, |i| self.fronts[i].right);
        let right = match after {
            Some(n) => self.fronts[n].left,
            None => self.right_tail(),
        };

        let mut incoming = Vec::new();
        let mut ids = Vec::new();
        if let (Some(a), Some(b)) = (first, last) {
            let mut c = a;
            loop {
                ids.push(c);
                incoming.push(self.fronts[c].wave());
                if c == b {
                    break;
                }
                c = self.fronts[c].next.unwrap();
            }
        }
        let outgoing = if at_exit {
            constrained_fronts(&self.flux, left, right, self.level)?
        } else {
            classical_fronts(&self.flux, left, right)
        };
        let it = Interaction { time: now, x, cause, at_exit, incoming, outgoing, left, right, level: self.level };
        if it.is_noop() {
            // keep identities of fronts that merely pass through
            return Ok(it);
        }
        for &i in &ids {
            self.kill(i);
        }
        let mut prev = before;
        let mut new_ids = Vec::with_capacity(it.outgoing.len());
        for w in &it.outgoing {
            let id = self.fronts.len();
            self.fronts.push(Front {
                x0: x,
                t0: now,
                speed: w.speed,
                left: w.left,
                right: w.right,
                kind: w.kind,
                prev,
                next: None,
                alive: true,
            });
            match prev {
                Some(p) => self.fronts[p].next = Some(id),
                None => self.head = Some(id),
            }
            prev = Some(id);
            new_ids.push(id);
        }
        match (prev, after) {
            (Some(p), Some(n)) => {
                self.fronts[p].next = Some(n);
                self.fronts[n].prev = Some(p);
            }
            (Some(p), None) => {
                self.fronts[p].next = None;
                self.tail = Some(p);
            }
            (None, Some(n)) => {
                self.fronts[n].prev = None;
                self.head = Some(n);
            }
            (None, None) => {
                self.head = None;
                self.tail = None;
            }
        }
        if let Some(b) = before {
            self.schedule_pair(b, self.fronts[b].next.unwrap());
        }
        for &i in &new_ids {
            self.schedule_around(i);
        }
        Ok(it)
    }

    /// Density profile at the current time; coincident fronts merge.
    pub fn profile(&self) -> DensityProfile {
        let now = self.now;
        DensityProfile::from_jumps(
            self.flux.rho(self.left_tail),
            self.iter_ids().map(|i| {
                let f = &self.fronts[i];
                (f.pos(now), self.flux.rho(f.right))
            }),
        )
    }

    /// Node indices of the traces at `0-` and `0+`.
    pub fn exit_traces(&self) -> (usize, usize) {
        let mut minus = self.left_tail;
        let mut plus = self.left_tail;
        for v in self.fronts() {
            if v.x < 0.0 || (v.x == 0.0 && v.wave.speed < 0.0) {
                minus = v.wave.right;
            }
            if v.x < 0.0 || (v.x == 0.0 && v.wave.speed <= 0.0) {
                plus = v.wave.right;
            } else {
                break;
            }
        }
        (minus, plus)
    }

    /// `TV(Psi)` summed front by front.
    pub fn tv_psi(&self) -> f64 {
        self.iter_ids()
            .map(|i| {
                let f = &self.fronts[i];
                (self.flux.psi_node(f.right) - self.flux.psi_node(f.left)).abs()
            })
            .sum()
    }

    /// True when a nonclassical front currently sits at the exit.
    pub fn has_exit_queue(&self) -> bool {
        self.fronts().any(|v| v.wave.kind == FrontKind::Nonclassical && v.x == 0.0)
    }

    /// Closes all live paths at the current time and returns every path.
    pub fn finish(mut self) -> Vec<FrontPath> {
        let ids: Vec<usize> = self.iter_ids().collect();
        for i in ids {
            self.kill(i);
        }
        self.paths.sort_by_key(|p| p.id);
        self.paths
    }

    /// Paths of fronts that have died so far.
    pub fn finished_paths(&self) -> &[FrontPath] {
        &self.paths
    }

    /// Density of the node index.
    pub fn rho(&self, i: usize) -> f64 {
        self.flux.rho(i)
    }

    /// Peak flux of the tracked flux.
    pub fn peak_flux(&self) -> f64 {
        self.flux.peak_flux()
    }
}
