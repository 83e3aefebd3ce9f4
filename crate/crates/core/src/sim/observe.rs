//! Observation builders: a multi-channel image of the battlefield and a
//! fixed-length feature vector.
//!
//! Vector layout (all entries in `[-1, 1]`):
//!
//! | range            | content                                                    |
//! |------------------|------------------------------------------------------------|
//! | `0..480`         | 40 unit slots x 12: coalition one-hot (8), x, y, health, alive |
//! | `480..484`       | step fraction, score, Blue alive fraction, Red alive fraction |
//! | `484..509`       | per Blue coalition standing order: hold/move/attack one-hot, x bin, y bin |
//!
//! Slots `0..20` hold Blue units and `20..40` Red units in id order; dead or
//! absent units leave their slot all-zero.

use serde::{Deserialize, Serialize};

use super::scenario::MAX_UNITS_PER_SIDE;
use super::types::{Cell, Coalition, Side};
use super::world::WorldState;

pub const SLOT_FEATURES: usize = Coalition::COUNT + 4;
pub const UNIT_SLOTS: usize = 2 * MAX_UNITS_PER_SIDE;
pub const GLOBAL_FEATURES: usize = 4;
pub const ORDER_FEATURES: usize = 5 * 5;
pub const VECTOR_LEN: usize = UNIT_SLOTS * SLOT_FEATURES + GLOBAL_FEATURES + ORDER_FEATURES;

pub const TERRAIN_CHANNELS: usize = 4;
/// Terrain one-hots, then an occupancy and a health plane per coalition.
pub const IMAGE_CHANNELS: usize = TERRAIN_CHANNELS + 2 * Coalition::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsMode {
    Image,
    Vector,
    Both,
}

impl ObsMode {
    pub fn has_image(self) -> bool {
        matches!(self, ObsMode::Image | ObsMode::Both)
    }

    pub fn has_vector(self) -> bool {
        matches!(self, ObsMode::Vector | ObsMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    /// `IMAGE_CHANNELS x height x width`, channel-major.
    pub image: Option<Vec<f64>>,
    pub vector: Option<Vec<f64>>,
}

impl Observation {
    pub fn mode(&self) -> Option<ObsMode> {
        match (self.image.is_some(), self.vector.is_some()) {
            (true, true) => Some(ObsMode::Both),
            (true, false) => Some(ObsMode::Image),
            (false, true) => Some(ObsMode::Vector),
            (false, false) => None,
        }
    }
}

impl WorldState {
    pub fn observe(&self, mode: ObsMode) -> Observation {
        let mut obs = Observation::default();
        self.observe_into(mode, &mut obs);
        obs
    }

    /// Like [`observe`](Self::observe) but reuses the buffers in `obs`.
    pub fn observe_into(&self, mode: ObsMode, obs: &mut Observation) {
        if mode.has_image() {
            let buf = obs.image.get_or_insert_with(Vec::new);
            self.write_image(buf);
        } else {
            obs.image = None;
        }
        if mode.has_vector() {
            let buf = obs.vector.get_or_insert_with(Vec::new);
            self.write_vector(buf);
        } else {
            obs.vector = None;
        }
    }

    fn write_vector(&self, v: &mut Vec<f64>) {
        v.clear();
        v.resize(VECTOR_LEN, 0.0);
        let (w, h) = (self.terrain.width as f64, self.terrain.height as f64);
        let mut next_slot = [0usize, MAX_UNITS_PER_SIDE];
        for u in &self.units {
            let side = (u.side == Side::Red) as usize;
            let slot = next_slot[side];
            next_slot[side] += 1;
            if !u.alive() {
                continue;
            }
            let base = slot * SLOT_FEATURES;
            v[base + u.coalition.index()] = 1.0;
            let f = &mut v[base + Coalition::COUNT..base + SLOT_FEATURES];
            f[0] = (u.pos.x / w).clamp(0.0, 1.0);
            f[1] = (u.pos.y / h).clamp(0.0, 1.0);
            f[2] = (u.health / u.max_health).clamp(0.0, 1.0);
            f[3] = 1.0;
        }

        let g = UNIT_SLOTS * SLOT_FEATURES;
        let roster = self.units.len().max(1) as f64;
        v[g] = (self.steps as f64 / self.rules.episode_cap as f64).clamp(0.0, 1.0);
        v[g + 1] = (self.score as f64 / (10.0 * roster)).clamp(-1.0, 1.0);
        let frac = |side| {
            let n = self.roster_count(side);
            if n == 0 {
                0.0
            } else {
                self.alive_count(side) as f64 / n as f64
            }
        };
        v[g + 2] = frac(Side::Blue);
        v[g + 3] = frac(Side::Red);

        let o = g + GLOBAL_FEATURES;
        let denom = (self.rules.grid_bins.max(2) - 1) as f64;
        for (k, order) in self.orders.iter().enumerate() {
            let base = o + 5 * k;
            v[base + order.kind_index()] = 1.0;
            if let Some((x, y)) = order.bins() {
                v[base + 3] = x as f64 / denom;
                v[base + 4] = y as f64 / denom;
            }
        }
    }

    fn write_image(&self, img: &mut Vec<f64>) {
        let (w, h) = (self.terrain.width, self.terrain.height);
        let plane = w * h;
        img.clear();
        img.resize(IMAGE_CHANNELS * plane, 0.0);
        for (i, cell) in self.terrain.cells.iter().enumerate() {
            let ch = match cell {
                Cell::Open => 0,
                Cell::Wadi => 1,
                Cell::Bridge => 2,
                Cell::City => 3,
            };
            img[ch * plane + i] = 1.0;
        }
        let mut roster = [0usize; Coalition::COUNT];
        for u in &self.units {
            roster[u.coalition.index()] += 1;
        }
        for u in self.units.iter().filter(|u| u.alive()) {
            let c = u.coalition.index();
            let x = (u.pos.x as usize).min(w - 1);
            let y = (u.pos.y as usize).min(h - 1);
            let n = roster[c] as f64;
            let occ = (TERRAIN_CHANNELS + 2 * c) * plane + y * w + x;
            img[occ] += 1.0 / n;
            img[occ + plane] += (u.health / u.max_health) / n;
        }
    }
}
