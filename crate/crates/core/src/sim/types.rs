use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Open,
    Wadi,
    Bridge,
    City,
}

impl Cell {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '.' => Some(Cell::Open),
            '~' => Some(Cell::Wadi),
            '=' => Some(Cell::Bridge),
            '#' => Some(Cell::City),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Cell::Open => '.',
            Cell::Wadi => '~',
            Cell::Bridge => '=',
            Cell::City => '#',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Battlefield grid. Row-major, `y = 0` is the top row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    /// Column separating the Blue (west) half from the Red-held (east) half.
    pub wadi_axis: usize,
}

impl Terrain {
    pub fn from_rows(rows: &[String], wadi_axis: usize) -> Result<Self, SimError> {
        let height = rows.len();
        if height == 0 {
            return Err(SimError::Config("terrain has no rows".into()));
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * height);
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(SimError::Config(format!(
                    "terrain row {y} has {} cells, expected {width}",
                    row.chars().count()
                )));
            }
            for (x, c) in row.chars().enumerate() {
                let cell = Cell::from_char(c).ok_or_else(|| {
                    SimError::Config(format!("unknown terrain glyph {c:?} at ({x}, {y})"))
                })?;
                cells.push(cell);
            }
        }
        let terrain = Self {
            width,
            height,
            cells,
            wadi_axis,
        };
        terrain.validate()?;
        Ok(terrain)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.wadi_axis >= self.width {
            return Err(SimError::Config(format!(
                "wadi_axis {} outside a {}-wide map",
                self.wadi_axis, self.width
            )));
        }
        if self.cells.len() != self.width * self.height {
            return Err(SimError::Config("terrain cell count mismatch".into()));
        }
        for y in 0..self.height {
            for x in 0..self.width {
                if self.cell(x, y) == Cell::Bridge && x != self.wadi_axis {
                    return Err(SimError::Config(format!(
                        "bridge at ({x}, {y}) is off the wadi column {}",
                        self.wadi_axis
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    /// Cell under a fractional position, `None` when off the map.
    #[inline]
    pub fn cell_at(&self, p: Vec2) -> Option<Cell> {
        if p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let (x, y) = (p.x as usize, p.y as usize);
        if x >= self.width || y >= self.height {
            return None;
        }
        Some(self.cell(x, y))
    }

    #[inline]
    pub fn passable(&self, p: Vec2, is_air: bool) -> bool {
        match self.cell_at(p) {
            None => false,
            Some(_) if is_air => true,
            Some(c) => c != Cell::Wadi,
        }
    }

    /// x coordinate of the line whose eastward passage counts as a crossing.
    pub fn axis_line(&self) -> f64 {
        self.wadi_axis as f64 + 0.5
    }

    pub fn rows(&self) -> Vec<String> {
        (0..self.height)
            .map(|y| (0..self.width).map(|x| self.cell(x, y).to_char()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(self, o: Vec2) -> f64 {
        let (dx, dy) = (o.x - self.x, o.y - self.y);
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Blue,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Coalition {
    Aviation,
    MechInfantry,
    Mortars,
    Scouts,
    Tanks,
    RedInfantry,
    RedArmor,
    RedAA,
}

impl Coalition {
    pub const ALL: [Coalition; 8] = [
        Coalition::Aviation,
        Coalition::MechInfantry,
        Coalition::Mortars,
        Coalition::Scouts,
        Coalition::Tanks,
        Coalition::RedInfantry,
        Coalition::RedArmor,
        Coalition::RedAA,
    ];

    /// The five commandable Blue coalitions, in command-index order.
    pub const BLUE: [Coalition; 5] = [
        Coalition::Aviation,
        Coalition::MechInfantry,
        Coalition::Mortars,
        Coalition::Scouts,
        Coalition::Tanks,
    ];

    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn side(self) -> Side {
        if self.index() < 5 {
            Side::Blue
        } else {
            Side::Red
        }
    }

    /// Command index for Blue coalitions.
    pub fn blue_index(self) -> Option<usize> {
        (self.side() == Side::Blue).then(|| self.index())
    }

    pub fn label(self) -> &'static str {
        match self {
            Coalition::Aviation => "Aviation",
            Coalition::MechInfantry => "Mechanized Infantry",
            Coalition::Mortars => "Mortars",
            Coalition::Scouts => "Scouts",
            Coalition::Tanks => "Tanks",
            Coalition::RedInfantry => "Red Infantry",
            Coalition::RedArmor => "Red Armor",
            Coalition::RedAA => "Red Air Defense",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: u32,
    pub side: Side,
    pub coalition: Coalition,
    pub pos: Vec2,
    /// Spawn point; the Red bot leashes to it.
    pub home: Vec2,
    pub health: f64,
    pub max_health: f64,
    pub speed: f64,
    pub range: f64,
    pub damage: f64,
    pub can_attack_air: bool,
    pub is_air: bool,
    pub distance_travelled: f64,
    /// Currently east of the wadi axis.
    pub crossed_wadi: bool,
}

impl Unit {
    #[inline]
    pub fn alive(&self) -> bool {
        self.health > 0.0
    }

    #[inline]
    pub fn can_target(&self, other: &Unit) -> bool {
        other.alive() && other.side != self.side && (!other.is_air || self.can_attack_air)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionId {
    NoOp,
    Move,
    Attack,
}

impl ActionId {
    pub const ALL: [ActionId; 3] = [ActionId::NoOp, ActionId::Move, ActionId::Attack];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// One decision-step order for a Blue coalition.
///
/// `x_bin` selects left/center/right and `y_bin` top/middle/bottom of a
/// `C x C` partition of the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Command {
    pub coalition: u8,
    pub action: ActionId,
    pub x_bin: u8,
    pub y_bin: u8,
}

impl Command {
    pub const NOOP: Command = Command {
        coalition: 0,
        action: ActionId::NoOp,
        x_bin: 0,
        y_bin: 0,
    };

    pub fn new(coalition: Coalition, action: ActionId, x_bin: u8, y_bin: u8) -> Self {
        Self {
            coalition: coalition.blue_index().expect("commands address Blue coalitions") as u8,
            action,
            x_bin,
            y_bin,
        }
    }

    pub fn is_noop(&self) -> bool {
        self.action == ActionId::NoOp
    }

    /// NoOp commands carry zeroed fields so every command has one spelling.
    pub fn is_canonical(&self) -> bool {
        !self.is_noop() || *self == Command::NOOP
    }

    pub fn validate(&self, bins: usize) -> Result<(), SimError> {
        if self.coalition as usize >= Coalition::BLUE.len() {
            return Err(SimError::InvalidCommand(format!(
                "coalition index {} out of range",
                self.coalition
            )));
        }
        if self.x_bin as usize >= bins || self.y_bin as usize >= bins {
            return Err(SimError::InvalidCommand(format!(
                "target bin ({}, {}) outside a {bins}x{bins} grid",
                self.x_bin, self.y_bin
            )));
        }
        Ok(())
    }
}

/// Standing order of a Blue coalition. Orders persist until replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    Hold,
    MoveTo { x_bin: u8, y_bin: u8 },
    AttackArea { x_bin: u8, y_bin: u8 },
}

impl Order {
    pub fn kind_index(self) -> usize {
        match self {
            Order::Hold => 0,
            Order::MoveTo { .. } => 1,
            Order::AttackArea { .. } => 2,
        }
    }

    pub fn bins(self) -> Option<(u8, u8)> {
        match self {
            Order::Hold => None,
            Order::MoveTo { x_bin, y_bin } | Order::AttackArea { x_bin, y_bin } => {
                Some((x_bin, y_bin))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    RedDestroyed,
    BlueDestroyed,
    Crossed,
    Retreated,
}

impl RewardKind {
    pub fn points(self) -> i64 {
        match self {
            RewardKind::RedDestroyed | RewardKind::Crossed => 10,
            RewardKind::BlueDestroyed | RewardKind::Retreated => -10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub tick: u64,
    pub unit: u32,
    pub kind: RewardKind,
    pub points: i64,
}
