//! Built-in example problems, stored as ordinary problem files so they run
//! through the same parser as user input.

use crate::spec::{ProblemSpec, SpecError};

const EXAMPLE_3_5: &str = "\
# periodic problem for x'' - x with a constant box right-hand side
dim = 1
grid = 512
a2 = 1
a1 = 0
a0 = -1
bc = periodic
rhs = box
f0 = 0
rho = 0.3
c = 0.3
m = 0
mu = 0
eta = 0.3
";

const EXAMPLE_3_6: &str = "\
# periodic problem for x'' - x' - x with a Lipschitz forcing
dim = 1
grid = 512
a2 = 1
a1 = -1
a0 = -1
bc = periodic
rhs = single
f0 = 0.5*x1 + cos(2*pi*t)
c = 1
m = 0.5
mu = 0.5
accretive = true
";

const EXAMPLE_4_3: &str = "\
# periodic problem for x'' - x near the Lipschitz solvability threshold
dim = 1
grid = 512
a2 = 1
a1 = 0
a0 = -1
bc = periodic
rhs = single
f0 = 0.9*x1 + sin(2*pi*t)
c = 1
m = 0.9
mu = 0.9
accretive = true
";

pub const PRESET_NAMES: [&str; 3] = ["example-3.5", "example-3.6", "example-4.3"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "example-3.5" => Some(EXAMPLE_3_5),
        "example-3.6" => Some(EXAMPLE_3_6),
        "example-4.3" => Some(EXAMPLE_4_3),
        _ => None,
    }
}

pub fn load_preset(name: &str) -> Result<ProblemSpec, SpecError> {
    match preset_text(name) {
        Some(text) => ProblemSpec::parse(text),
        None => Err(SpecError(format!(
            "unknown preset `{name}` (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}
