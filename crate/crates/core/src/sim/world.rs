use serde::{Deserialize, Serialize};

use super::digest::{Digest, Fnv64};
use super::rng::SimRng;
use super::scenario::{Rules, ScenarioConfig};
use super::types::{
    ActionId, Coalition, Command, Order, RewardEvent, RewardKind, Side, Terrain, Unit, Vec2,
};
use super::SimError;

const ARRIVED: f64 = 1e-9;

/// Complete simulator state. Cloning a world forks the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub terrain: Terrain,
    pub rules: Rules,
    /// Ids equal indices. Blue units come first, then Red; dead units stay
    /// in place with zero health and take no further part in the battle.
    pub units: Vec<Unit>,
    /// Standing order per Blue coalition, indexed by command coalition index.
    pub orders: [Order; 5],
    pub tick: u64,
    /// Decision steps taken so far.
    pub steps: u32,
    pub rng: SimRng,
    pub score: i64,
    pub event_log: Vec<RewardEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub reward: i64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy)]
enum Intent {
    Idle,
    Fire(usize),
    Move(Vec2),
}

impl WorldState {
    /// Canonical initial state for `(scenario, seed)`.
    pub fn reset(scenario: &ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        let terrain = scenario.terrain()?;
        let mut rng = SimRng::new(seed);
        let axis = terrain.axis_line();
        let mut units = Vec::new();
        for coalition in Coalition::ALL {
            for group in scenario.units.iter().filter(|g| g.coalition == coalition) {
                let stats = &scenario.stats[&coalition];
                for &[x, y] in &group.positions {
                    let base = Vec2::new(x, y);
                    let jittered = Vec2::new(
                        x + scenario.spawn_jitter * rng.next_signed(),
                        y + scenario.spawn_jitter * rng.next_signed(),
                    );
                    let pos = if terrain.passable(jittered, stats.air) {
                        jittered
                    } else {
                        base
                    };
                    units.push(Unit {
                        id: units.len() as u32,
                        side: coalition.side(),
                        coalition,
                        pos,
                        home: pos,
                        health: stats.health,
                        max_health: stats.health,
                        speed: stats.speed,
                        range: stats.range,
                        damage: stats.damage,
                        can_attack_air: stats.attacks_air,
                        is_air: stats.air,
                        distance_travelled: 0.0,
                        crossed_wadi: pos.x >= axis,
                    });
                }
            }
        }
        Ok(Self {
            terrain,
            rules: scenario.rules(),
            units,
            orders: [Order::Hold; 5],
            tick: 0,
            steps: 0,
            rng,
            score: 0,
            event_log: Vec::new(),
        })
    }

    pub fn alive_count(&self, side: Side) -> usize {
        self.units.iter().filter(|u| u.side == side && u.alive()).count()
    }

    pub fn roster_count(&self, side: Side) -> usize {
        self.units.iter().filter(|u| u.side == side).count()
    }

    pub fn coalition_roster(&self, c: Coalition) -> usize {
        self.units.iter().filter(|u| u.coalition == c).count()
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.rules.episode_cap
            || self.alive_count(Side::Blue) == 0
            || self.alive_count(Side::Red) == 0
    }

    /// Center of the `(x_bin, y_bin)` region of the map.
    pub fn bin_center(&self, x_bin: u8, y_bin: u8) -> Vec2 {
        let c = self.rules.grid_bins as f64;
        Vec2::new(
            (x_bin as f64 + 0.5) * self.terrain.width as f64 / c,
            (y_bin as f64 + 0.5) * self.terrain.height as f64 / c,
        )
    }

    pub fn bin_of(&self, p: Vec2) -> (u8, u8) {
        let c = self.rules.grid_bins;
        let bx = ((p.x / self.terrain.width as f64) * c as f64) as usize;
        let by = ((p.y / self.terrain.height as f64) * c as f64) as usize;
        (bx.min(c - 1) as u8, by.min(c - 1) as u8)
    }

    /// Advances one decision step: applies `cmd`, then runs
    /// `ticks_per_step` simulator ticks (fewer if a side is wiped out).
    pub fn step(&mut self, cmd: &Command) -> Result<StepOutcome, SimError> {
        if self.is_done() {
            return Err(SimError::Terminal);
        }
        cmd.validate(self.rules.grid_bins)?;
        let slot = cmd.coalition as usize;
        match cmd.action {
            ActionId::NoOp => {}
            ActionId::Move => {
                self.orders[slot] = Order::MoveTo {
                    x_bin: cmd.x_bin,
                    y_bin: cmd.y_bin,
                }
            }
            ActionId::Attack => {
                self.orders[slot] = Order::AttackArea {
                    x_bin: cmd.x_bin,
                    y_bin: cmd.y_bin,
                }
            }
        }
        let before = self.score;
        for _ in 0..self.rules.ticks_per_step {
            self.tick_once();
            if self.alive_count(Side::Blue) == 0 || self.alive_count(Side::Red) == 0 {
                break;
            }
        }
        self.steps += 1;
        Ok(StepOutcome {
            reward: self.score - before,
            done: self.is_done(),
        })
    }

    fn tick_once(&mut self) {
        let intents: Vec<Intent> = (0..self.units.len())
            .map(|i| {
                if !self.units[i].alive() {
                    Intent::Idle
                } else if self.units[i].side == Side::Blue {
                    self.blue_intent(i)
                } else {
                    self.red_intent(i)
                }
            })
            .collect();

        // Fire simultaneously from pre-tick positions.
        let mut incoming = vec![0.0; self.units.len()];
        for (i, intent) in intents.iter().enumerate() {
            if let Intent::Fire(t) = *intent {
                let spread = self.rules.damage_jitter * self.rng.next_signed();
                incoming[t] += self.units[i].damage * (1.0 + spread);
            }
        }
        let mut events = Vec::new();
        for (u, dmg) in self.units.iter_mut().zip(&incoming) {
            if *dmg > 0.0 && u.alive() {
                u.health -= dmg;
                if u.health <= 0.0 {
                    u.health = 0.0;
                    let kind = match u.side {
                        Side::Blue => RewardKind::BlueDestroyed,
                        Side::Red => RewardKind::RedDestroyed,
                    };
                    events.push((u.id, kind));
                }
            }
        }

        let axis = self.terrain.axis_line();
        let mut crossings = Vec::new();
        for (i, intent) in intents.iter().enumerate() {
            let Intent::Move(goal) = *intent else { continue };
            let u = &self.units[i];
            if !u.alive() {
                continue;
            }
            let d = u.pos.dist(goal);
            if d <= ARRIVED {
                continue;
            }
            let travel = u.speed.min(d);
            let next = Vec2::new(
                u.pos.x + (goal.x - u.pos.x) / d * travel,
                u.pos.y + (goal.y - u.pos.y) / d * travel,
            );
            if !self.terrain.passable(next, u.is_air) {
                continue;
            }
            let moved = u.pos.dist(next);
            let u = &mut self.units[i];
            u.pos = next;
            u.distance_travelled += moved;
            if u.side == Side::Blue {
                let east = u.pos.x >= axis;
                if east != u.crossed_wadi {
                    u.crossed_wadi = east;
                    crossings.push((
                        u.id,
                        if east {
                            RewardKind::Crossed
                        } else {
                            RewardKind::Retreated
                        },
                    ));
                }
            }
        }

        self.tick += 1;
        for (unit, kind) in events.into_iter().chain(crossings) {
            let points = kind.points();
            self.score += points;
            self.event_log.push(RewardEvent {
                tick: self.tick,
                unit,
                kind,
                points,
            });
        }
    }

    /// Nearest living enemy of unit `i` matching `filter`; ties go to the
    /// lowest id.
    fn nearest_enemy(&self, i: usize, filter: impl Fn(&Unit) -> bool) -> Option<(usize, f64)> {
        let me = &self.units[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, other) in self.units.iter().enumerate() {
            if !me.can_target(other) || !filter(other) {
                continue;
            }
            let d = me.pos.dist(other.pos);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        best
    }

    fn in_range(&self, i: usize) -> Option<usize> {
        let range = self.units[i].range;
        self.nearest_enemy(i, |_| true)
            .filter(|&(_, d)| d <= range)
            .map(|(j, _)| j)
    }

    fn fire_or(&self, i: usize, otherwise: Intent) -> Intent {
        self.in_range(i).map(Intent::Fire).unwrap_or(otherwise)
    }

    fn move_or_idle(&self, i: usize, goal: Vec2) -> Intent {
        if self.units[i].pos.dist(goal) > ARRIVED {
            Intent::Move(goal)
        } else {
            Intent::Idle
        }
    }

    fn blue_intent(&self, i: usize) -> Intent {
        let u = &self.units[i];
        let slot = u.coalition.blue_index().expect("blue unit");
        match self.orders[slot] {
            Order::Hold => self.fire_or(i, Intent::Idle),
            Order::MoveTo { x_bin, y_bin } => {
                let goal = self.bin_center(x_bin, y_bin);
                match self.move_or_idle(i, goal) {
                    Intent::Idle => self.fire_or(i, Intent::Idle),
                    m => m,
                }
            }
            Order::AttackArea { x_bin, y_bin } => {
                let target = self.nearest_enemy(i, |e| self.bin_of(e.pos) == (x_bin, y_bin));
                match target {
                    Some((t, d)) if d <= u.range => Intent::Fire(t),
                    Some((t, _)) => self.fire_or(i, Intent::Move(self.units[t].pos)),
                    None => {
                        let goal = self.bin_center(x_bin, y_bin);
                        let fallback = self.move_or_idle(i, goal);
                        self.fire_or(i, fallback)
                    }
                }
            }
        }
    }

    /// Scripted Red behavior: shoot the nearest Blue unit in range, else
    /// chase the nearest Blue unit within the leash of home, else go home.
    fn red_intent(&self, i: usize) -> Intent {
        let u = &self.units[i];
        if let Some(t) = self.in_range(i) {
            return Intent::Fire(t);
        }
        let leash = self.rules.red_leash;
        let home = u.home;
        if let Some((t, _)) = self.nearest_enemy(i, |e| e.pos.dist(home) <= leash) {
            return Intent::Move(self.units[t].pos);
        }
        self.move_or_idle(i, home)
    }

    pub fn digest(&self) -> Digest {
        let mut h = Fnv64::new();
        let t = &self.terrain;
        h.write_u64(t.width as u64);
        h.write_u64(t.height as u64);
        h.write_u64(t.wadi_axis as u64);
        for c in &t.cells {
            h.write_u8(c.index() as u8);
        }
        let r = &self.rules;
        h.write_u64(r.grid_bins as u64);
        h.write_u32(r.ticks_per_step);
        h.write_u32(r.episode_cap);
        h.write_f64(r.red_leash);
        h.write_f64(r.damage_jitter);
        h.write_u64(self.units.len() as u64);
        for u in &self.units {
            h.write_u32(u.id);
            h.write_u8(u.side as u8);
            h.write_u8(u.coalition.index() as u8);
            for v in [
                u.pos.x,
                u.pos.y,
                u.home.x,
                u.home.y,
                u.health,
                u.max_health,
                u.speed,
                u.range,
                u.damage,
                u.distance_travelled,
            ] {
                h.write_f64(v);
            }
            h.write_bool(u.can_attack_air);
            h.write_bool(u.is_air);
            h.write_bool(u.crossed_wadi);
        }
        for o in &self.orders {
            h.write_u8(o.kind_index() as u8);
            let (x, y) = o.bins().unwrap_or((0, 0));
            h.write_u8(x);
            h.write_u8(y);
        }
        h.write_u64(self.tick);
        h.write_u32(self.steps);
        h.write_u64(self.rng.state());
        h.write_i64(self.score);
        h.write_u64(self.event_log.len() as u64);
        for e in &self.event_log {
            h.write_u64(e.tick);
            h.write_u32(e.unit);
            h.write_u8(e.kind as u8);
            h.write_i64(e.points);
        }
        Digest(h.finish())
    }
}
