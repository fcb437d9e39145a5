//! Frozen particle configurations used by the sweeps, the demo and the tests.
//!
//! The four-particle state below was picked from a random search over
//! configurations in `[-1.5, 1.5]^2` with the default Morse and vision
//! parameters. Its particle 2 loses its heading root at `t ~ 0.44` with a
//! positive speed on the far branch. The frame is turned so that the
//! breakdown heading lands near `-0.57`.

use crate::first_order::{init_branch, FoState};
use crate::polar::Model;
use crate::roots::RootConfig;
use crate::vec2::Vec2;
use crate::Result;

/// Horizon long enough to contain the fixture breakdown.
pub const RUN1_HORIZON: f64 = 2.0;

const RAW_POSITIONS: [[f64; 2]; 4] = [
    [1.3131761417765473, 0.8728510029193322],
    [-0.36658746081212557, -1.1849424656411542],
    [0.9193659182065819, -0.45991419701518277],
    [0.7192204106055708, 0.9818000248320389],
];

const RAW_HEADINGS: [f64; 4] = [-1.5238014498775307, 0.9434574550413375, 1.7181707182767703, -2.107018576804655];

/// Frame rotation applied to the raw search output.
pub const RUN1_TURN: f64 = -2.413_582_840_594;

/// Positions and initial heading guesses of the fixture in the turned frame.
pub fn run1_like_config() -> (Vec<Vec2>, Vec<f64>) {
    let pos = RAW_POSITIONS.iter().map(|p| Vec2::new(p[0], p[1]).rotate(RUN1_TURN)).collect();
    let guesses = RAW_HEADINGS.iter().map(|g| crate::wrap_angle(g + RUN1_TURN)).collect();
    (pos, guesses)
}

/// First-order state at `t = 0` with every particle on the branch nearest its guess.
pub fn run1_like_state(model: &Model, roots: &RootConfig) -> Result<FoState> {
    let (pos, guesses) = run1_like_config();
    init_branch(model, &pos, &guesses, roots)
}
