//! A seedable first-person health-gathering world.
//!
//! The agent stands in a walled room whose floor is acid. Health drains on a
//! fixed schedule; health packs restore it and red jars (mines) hurt. The
//! score of an episode is the number of frames survived, capped by a
//! timeout. Observations are raycast RGB frames.

mod episode;
mod render;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use episode::{
    read_trace, run_episode, write_trace, Decision, DecisionRecord, EpisodeOptions, EpisodeResult, Policy,
};
pub use render::render;

use crate::controller::ActionSet;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::rng::Rng;

/// Collision radius of the agent in cells.
pub const AGENT_RADIUS: f64 = 0.2;
/// Full health.
pub const MAX_HEALTH: f64 = 100.0;
/// Minimum distance between a freshly placed item and the agent.
const SPAWN_CLEARANCE: f64 = 1.0;
/// Minimum distance between two items.
const ITEM_SPACING: f64 = 0.6;
/// Minimum distance between an item and a wall.
const WALL_MARGIN: f64 = 0.35;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// Interior size in cells; the room is surrounded by a wall ring.
    pub room_width: usize,
    pub room_height: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub field_of_view_degrees: f64,
    /// Health lost every `acid_interval` frames.
    pub acid_damage: f64,
    pub acid_interval: u32,
    pub health_pack_heal: f64,
    pub mine_damage: f64,
    /// Touching a mine sets health to zero.
    pub deadly_mines: bool,
    pub max_frames: u32,
    /// Items kept in the room; picked-up items respawn elsewhere.
    pub health_packs: usize,
    pub mines: usize,
    pub turn_degrees: f64,
    pub move_speed: f64,
    pub pickup_radius: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            room_width: 10,
            room_height: 10,
            frame_height: 120,
            frame_width: 160,
            field_of_view_degrees: 66.0,
            acid_damage: 4.0,
            acid_interval: 8,
            health_pack_heal: 25.0,
            mine_damage: 25.0,
            deadly_mines: false,
            max_frames: 2000,
            health_packs: 8,
            mines: 2,
            turn_degrees: 6.0,
            move_speed: 0.08,
            pickup_radius: 0.3,
        }
    }
}

impl WorldConfig {
    /// Default world rendered at `height × width`.
    pub fn with_resolution(height: usize, width: usize) -> Self {
        Self {
            frame_height: height,
            frame_width: width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("acid_damage", self.acid_damage),
            ("health_pack_heal", self.health_pack_heal),
            ("mine_damage", self.mine_damage),
            ("turn_degrees", self.turn_degrees),
            ("move_speed", self.move_speed),
            ("pickup_radius", self.pickup_radius),
            ("field_of_view_degrees", self.field_of_view_degrees),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("environment.{name} must be positive, got {v}")));
            }
        }
        if self.field_of_view_degrees >= 180.0 {
            return Err(Error::config("environment.field_of_view_degrees must be below 180"));
        }
        if self.room_width == 0 || self.room_height == 0 {
            return Err(Error::config("environment room must be at least 1x1 cells"));
        }
        if self.frame_height < 2 || self.frame_width < 2 {
            return Err(Error::config("environment frame must be at least 2x2 pixels"));
        }
        if self.acid_interval == 0 || self.max_frames == 0 {
            return Err(Error::config("environment acid_interval and max_frames must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    HealthPack,
    Mine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub kind: ItemKind,
    pub x: f64,
    pub y: f64,
}

/// Result of one rendered step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub frame: Frame,
    /// Health divided by 100.
    pub health: f64,
    pub done: bool,
    /// Frames survived so far.
    pub score: u32,
}

/// Complete world state. Coordinates are in cells; the interior spans
/// `[1, room_width + 1] × [1, room_height + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    config: WorldConfig,
    x: f64,
    y: f64,
    heading: f64,
    health: f64,
    items: Vec<Item>,
    frame: u32,
    packs_collected: u32,
    mines_hit: u32,
    rng: Rng,
}

impl EnvState {
    /// Places the agent and items from `seed`.
    pub fn reset(config: &WorldConfig, seed: u64) -> Result<(Self, Frame)> {
        config.validate()?;
        let mut rng = crate::rng::rng_from(seed, &[]);
        let (w, h) = (config.room_width as f64, config.room_height as f64);
        let margin = AGENT_RADIUS + 0.05;
        let x = 1.0 + margin + rng.random::<f64>() * (w - 2.0 * margin).max(0.0);
        let y = 1.0 + margin + rng.random::<f64>() * (h - 2.0 * margin).max(0.0);
        let heading = rng.random::<f64>() * std::f64::consts::TAU;
        let mut state = Self {
            config: config.clone(),
            x,
            y,
            heading,
            health: MAX_HEALTH,
            items: Vec::with_capacity(config.health_packs + config.mines),
            frame: 0,
            packs_collected: 0,
            mines_hit: 0,
            rng,
        };
        for kind in std::iter::repeat_n(ItemKind::HealthPack, config.health_packs)
            .chain(std::iter::repeat_n(ItemKind::Mine, config.mines))
        {
            let (ix, iy) = state.free_spot(None)?;
            state.items.push(Item { kind, x: ix, y: iy });
        }
        let frame = state.render();
        Ok((state, frame))
    }

    /// A state with hand-placed agent and items, for inspection and tests.
    pub fn with_layout(config: &WorldConfig, x: f64, y: f64, heading: f64, items: Vec<Item>) -> Result<Self> {
        config.validate()?;
        let state = Self {
            config: config.clone(),
            x,
            y,
            heading,
            health: MAX_HEALTH,
            items,
            frame: 0,
            packs_collected: 0,
            mines_hit: 0,
            rng: crate::rng::rng_from(0, &[]),
        };
        if state.blocked(x, y) {
            return Err(Error::config("agent placed inside a wall"));
        }
        Ok(state)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Heading in radians; 0 faces +x and turning left increases it.
    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn health(&self) -> f64 {
        self.health
    }

    pub fn normalized_health(&self) -> f64 {
        self.health / MAX_HEALTH
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn frame_index(&self) -> u32 {
        self.frame
    }

    pub fn score(&self) -> u32 {
        self.frame
    }

    pub fn packs_collected(&self) -> u32 {
        self.packs_collected
    }

    pub fn mines_hit(&self) -> u32 {
        self.mines_hit
    }

    pub fn is_done(&self) -> bool {
        self.health <= 0.0 || self.frame >= self.config.max_frames
    }

    pub fn render(&self) -> Frame {
        render(self)
    }

    /// Advances one frame and renders the result.
    pub fn step(&mut self, actions: ActionSet) -> Result<StepOutcome> {
        self.advance(actions)?;
        Ok(StepOutcome {
            frame: self.render(),
            health: self.normalized_health(),
            done: self.is_done(),
            score: self.score(),
        })
    }

    /// Advances one frame without rendering; returns whether the episode
    /// has ended.
    pub fn advance(&mut self, actions: ActionSet) -> Result<bool> {
        if self.is_done() {
            return Err(Error::state(format!("episode already ended at frame {}", self.frame)));
        }
        let turn = self.config.turn_degrees.to_radians();
        if actions.turn_left {
            self.heading += turn;
        }
        if actions.turn_right {
            self.heading -= turn;
        }
        self.heading = self.heading.rem_euclid(std::f64::consts::TAU);
        if actions.move_forward {
            self.move_by(self.heading.cos() * self.config.move_speed, self.heading.sin() * self.config.move_speed);
        }
        self.pick_up()?;
        self.frame += 1;
        if self.frame.is_multiple_of(self.config.acid_interval) {
            self.health -= self.config.acid_damage;
        }
        self.health = self.health.clamp(0.0, MAX_HEALTH);
        Ok(self.is_done())
    }

    /// Moves with wall sliding: each axis is blocked independently.
    fn move_by(&mut self, dx: f64, dy: f64) {
        let nx = self.x + dx;
        if !self.blocked(nx, self.y) {
            self.x = nx;
        }
        let ny = self.y + dy;
        if !self.blocked(self.x, ny) {
            self.y = ny;
        }
    }

    /// True if a disc of the agent's radius at `(x, y)` overlaps a wall.
    fn blocked(&self, x: f64, y: f64) -> bool {
        let r = AGENT_RADIUS;
        [(x - r, y - r), (x + r, y - r), (x - r, y + r), (x + r, y + r)]
            .iter()
            .any(|&(px, py)| self.is_wall(px.floor() as i64, py.floor() as i64))
    }

    pub fn is_wall(&self, cx: i64, cy: i64) -> bool {
        cx <= 0 || cy <= 0 || cx > self.config.room_width as i64 || cy > self.config.room_height as i64
    }

    fn pick_up(&mut self) -> Result<()> {
        let r2 = self.config.pickup_radius * self.config.pickup_radius;
        let mut i = 0;
        while i < self.items.len() {
            let it = self.items[i];
            if (it.x - self.x).powi(2) + (it.y - self.y).powi(2) <= r2 {
                match it.kind {
                    ItemKind::HealthPack => {
                        self.health = (self.health + self.config.health_pack_heal).min(MAX_HEALTH);
                        self.packs_collected += 1;
                    }
                    ItemKind::Mine => {
                        self.health = if self.config.deadly_mines {
                            0.0
                        } else {
                            (self.health - self.config.mine_damage).max(0.0)
                        };
                        self.mines_hit += 1;
                    }
                }
                let (x, y) = self.free_spot(Some(i))?;
                self.items[i] = Item { kind: it.kind, x, y };
            }
            i += 1;
        }
        Ok(())
    }

    /// A random position away from walls, the agent and other items.
    fn free_spot(&mut self, replacing: Option<usize>) -> Result<(f64, f64)> {
        let (w, h) = (self.config.room_width as f64, self.config.room_height as f64);
        let span_x = (w - 2.0 * WALL_MARGIN).max(0.0);
        let span_y = (h - 2.0 * WALL_MARGIN).max(0.0);
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = 1.0 + WALL_MARGIN + self.rng.random::<f64>() * span_x;
            let y = 1.0 + WALL_MARGIN + self.rng.random::<f64>() * span_y;
            let near_agent = (x - self.x).powi(2) + (y - self.y).powi(2) < SPAWN_CLEARANCE.powi(2);
            let crowded = self
                .items
                .iter()
                .enumerate()
                .filter(|(j, _)| Some(*j) != replacing)
                .any(|(_, it)| (it.x - x).powi(2) + (it.y - y).powi(2) < ITEM_SPACING.powi(2));
            if !near_agent && !crowded {
                return Ok((x, y));
            }
        }
        Err(Error::config(format!(
            "room of {}x{} cells is too small to place {} items",
            self.config.room_width,
            self.config.room_height,
            self.config.health_packs + self.config.mines
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> WorldConfig {
        WorldConfig::with_resolution(30, 40)
    }

    const FORWARD: ActionSet = ActionSet {
        turn_left: false,
        turn_right: false,
        move_forward: true,
    };

    #[test]
    fn reset_is_deterministic() {
        let (a, fa) = EnvState::reset(&small(), 5).unwrap();
        let (b, fb) = EnvState::reset(&small(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(fa, fb);
        assert_eq!(a.normalized_health(), 1.0);
        assert_eq!(a.frame_index(), 0);
        assert_eq!(a.items().len(), 10);
    }

    #[test]
    fn spawn_positions_differ_across_seeds() {
        let cfg = small();
        let same = (0..100)
            .filter(|&s| {
                let a = EnvState::reset(&cfg, 2 * s).unwrap().0;
                let b = EnvState::reset(&cfg, 2 * s + 1).unwrap().0;
                a.position() == b.position()
            })
            .count();
        assert_eq!(same, 0);
    }

    #[test]
    fn idle_agent_dies_at_frame_200() {
        let (mut s, _) = EnvState::reset(&small(), 1).unwrap();
        let mut frames = 0;
        while !s.advance(ActionSet::NONE).unwrap() {
            frames += 1;
        }
        assert_eq!(frames + 1, 200);
        assert_eq!(s.score(), 200);
        assert_eq!(s.health(), 0.0);
        assert!(s.step(ActionSet::NONE).is_err());
    }

    #[test]
    fn opposite_turns_cancel() {
        let (mut s, _) = EnvState::reset(&small(), 2).unwrap();
        let h = s.heading();
        s.advance(ActionSet::from_indices(&[0, 1])).unwrap();
        assert_eq!(s.heading(), h);
        s.advance(ActionSet::from_indices(&[0])).unwrap();
        let diff = (s.heading() - h - 6f64.to_radians()).rem_euclid(std::f64::consts::TAU);
        assert!(diff.min(std::f64::consts::TAU - diff) < 1e-12);
    }

    #[test]
    fn wall_blocks_forward_motion() {
        let cfg = small();
        // Facing +x against the east wall at contact distance.
        let x = 1.0 + cfg.room_width as f64 - AGENT_RADIUS - 1e-9;
        let mut s = EnvState::with_layout(&cfg, x, 5.5, 0.0, vec![]).unwrap();
        s.advance(FORWARD).unwrap();
        assert_eq!(s.position(), (x, 5.5));
        // Heading diagonally into the wall slides along it.
        let mut s = EnvState::with_layout(&cfg, x, 5.5, 0.5, vec![]).unwrap();
        s.advance(FORWARD).unwrap();
        assert_eq!(s.position().0, x);
        assert!(s.position().1 > 5.5);
    }

    #[test]
    fn pickups_heal_and_hurt() {
        let cfg = small();
        let items = vec![Item { kind: ItemKind::HealthPack, x: 5.08, y: 5.0 }];
        let mut s = EnvState::with_layout(&cfg, 5.0, 5.0, 0.0, items).unwrap();
        s.health = 90.0;
        s.advance(FORWARD).unwrap();
        assert_eq!(s.health(), MAX_HEALTH);
        assert_eq!(s.packs_collected(), 1);
        assert_eq!(s.items().len(), 1);
        assert!((s.items()[0].x - 5.08).abs() > 1e-9 || (s.items()[0].y - 5.0).abs() > 1e-9);

        let items = vec![Item { kind: ItemKind::Mine, x: 5.1, y: 5.0 }];
        let mut s = EnvState::with_layout(&cfg, 5.0, 5.0, 0.0, items.clone()).unwrap();
        s.advance(ActionSet::NONE).unwrap();
        assert_eq!(s.health(), 75.0);

        let deadly = WorldConfig { deadly_mines: true, ..cfg };
        let mut s = EnvState::with_layout(&deadly, 5.0, 5.0, 0.0, items).unwrap();
        assert!(s.advance(ActionSet::NONE).unwrap());
        assert_eq!(s.score(), 1);
    }

    #[test]
    fn tiny_room_cannot_hold_items() {
        let cfg = WorldConfig {
            room_width: 1,
            room_height: 1,
            ..small()
        };
        assert!(matches!(EnvState::reset(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = WorldConfig {
            acid_damage: 0.0,
            ..small()
        };
        assert!(EnvState::reset(&cfg, 0).is_err());
    }

    fn action_strategy() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..8, 1..300)
    }

    fn set(bits: u8) -> ActionSet {
        ActionSet {
            turn_left: bits & 1 != 0,
            turn_right: bits & 2 != 0,
            move_forward: bits & 4 != 0,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn trajectories_replay_and_stay_in_bounds(seed in any::<u64>(), actions in action_strategy()) {
            let cfg = small();
            let (mut a, _) = EnvState::reset(&cfg, seed).unwrap();
            let (mut b, _) = EnvState::reset(&cfg, seed).unwrap();
            for &bits in &actions {
                if a.is_done() {
                    break;
                }
                let da = a.advance(set(bits)).unwrap();
                let db = b.advance(set(bits)).unwrap();
                prop_assert_eq!(da, db);
                prop_assert_eq!(&a, &b);
                prop_assert!(a.health() <= MAX_HEALTH && a.health() >= 0.0);
                prop_assert!(a.score() <= cfg.max_frames);
                let (x, y) = a.position();
                prop_assert!(!a.blocked(x, y));
                for it in a.items() {
                    prop_assert!(!a.is_wall(it.x.floor() as i64, it.y.floor() as i64));
                }
            }
            let f = a.render();
            prop_assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(f, b.render());
        }
    }
}
