//! Test models over the unit hypercube and the external black-box
//! adapter.
//!
//! Three built-in families cover the benchmark suite: a smooth peak along
//! a circular ridge, a single ball indicator over a leading coordinate
//! block, and a sum of two ball indicators over disjoint blocks. The
//! black-box adapter speaks a newline-delimited protocol to a child
//! process, so any external simulator can stand in for `f`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pointwise-evaluable function on `[0,1]^d`.
pub trait Model: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64]) -> Result<f64>;
    /// Short identifier used in traces and reports.
    fn label(&self) -> String {
        "custom".into()
    }
}

/// Smooth ridge model `1/(|a − y₁² − y₂²| + δ)` on `[0,1]²`: a peak of
/// height `1/δ` along the circle `y₁² + y₂² = a`.
#[derive(Debug, Clone, Copy)]
pub struct Ridge {
    pub a: f64,
    pub delta: f64,
}

impl Model for Ridge {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, y: &[f64]) -> Result<f64> {
        check_point(y, 2)?;
        Ok(1.0 / ((self.a - y[0] * y[0] - y[1] * y[1]).abs() + self.delta))
    }

    fn label(&self) -> String {
        format!("p1(a={};delta={})", self.a, self.delta)
    }
}

/// Ball indicator `c·1{Σ_{m ≤ d'} y_m² ≤ r²}` on `[0,1]^d`; dimensions
/// beyond the first `d'` are inert.
#[derive(Debug, Clone, Copy)]
pub struct BallIndicator {
    pub dprime: usize,
    pub radius: f64,
    pub scale: f64,
    pub dim: usize,
}

impl Model for BallIndicator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &[f64]) -> Result<f64> {
        check_point(y, self.dim)?;
        let ssq: f64 = y[..self.dprime].iter().map(|v| v * v).sum();
        Ok(if ssq <= self.radius * self.radius {
            self.scale
        } else {
            0.0
        })
    }

    fn label(&self) -> String {
        format!(
            "p2(dprime={};r={};c={})",
            self.dprime, self.radius, self.scale
        )
    }
}

/// Sum of two ball indicators over the disjoint coordinate blocks
/// `1..d'` and `d'+1..2d'`, taking values in `{0, c, 2c}`.
#[derive(Debug, Clone, Copy)]
pub struct TwoBallIndicator {
    pub dprime: usize,
    pub r1: f64,
    pub r2: f64,
    pub scale: f64,
    pub dim: usize,
}

impl Model for TwoBallIndicator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &[f64]) -> Result<f64> {
        check_point(y, self.dim)?;
        let d = self.dprime;
        let first: f64 = y[..d].iter().map(|v| v * v).sum();
        let second: f64 = y[d..2 * d].iter().map(|v| v * v).sum();
        let hits = u32::from(first <= self.r1 * self.r1) + u32::from(second <= self.r2 * self.r2);
        Ok(self.scale * f64::from(hits))
    }

    fn label(&self) -> String {
        format!(
            "p3(dprime={};r1={};r2={};c={})",
            self.dprime, self.r1, self.r2, self.scale
        )
    }
}

/// Adapter wrapping a plain closure; output must be finite.
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnModel { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &[f64]) -> Result<f64> {
        check_point(y, self.dim)?;
        let value = (self.f)(y);
        if !value.is_finite() {
            return Err(Error::ModelFailure {
                point: y.to_vec(),
                detail: format!("model returned non-finite value {value}"),
            });
        }
        Ok(value)
    }
}

fn check_point(y: &[f64], dim: usize) -> Result<()> {
    if y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: y.len(),
        });
    }
    Ok(())
}

struct BlackBoxChild {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A model backed by a child process speaking the line protocol: one
/// request line of `d` space-separated decimal reals, one response line
/// holding a single decimal real, responses in request order. The child
/// is started once and kept alive across calls.
pub struct BlackBox {
    dim: usize,
    command: Vec<String>,
    io: Mutex<BlackBoxChild>,
}

impl BlackBox {
    pub fn spawn(command: &[String], dim: usize) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::InvalidConfig("black-box command is empty".into()));
        }
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Protocol(format!("failed to start {:?}: {e}", command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(BlackBox {
            dim,
            command: command.to_vec(),
            io: Mutex::new(BlackBoxChild {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Model for BlackBox {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &[f64]) -> Result<f64> {
        check_point(y, self.dim)?;
        let mut io = self.io.lock().expect("black-box lock");
        let mut request = String::new();
        for (k, v) in y.iter().enumerate() {
            if k > 0 {
                request.push(' ');
            }
            // Display output of f64 is the shortest round-trip form.
            request.push_str(&format!("{v}"));
        }
        request.push('\n');
        io.stdin
            .write_all(request.as_bytes())
            .and_then(|()| io.stdin.flush())
            .map_err(|e| Error::Protocol(format!("request for point {y:?} failed: {e}")))?;
        let mut line = String::new();
        let read = io
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Protocol(format!("response for point {y:?} failed: {e}")))?;
        if read == 0 {
            return Err(Error::Protocol(format!(
                "black-box exited before answering for point {y:?}"
            )));
        }
        let value: f64 = line.trim().parse().map_err(|_| {
            Error::Protocol(format!("malformed response {line:?} for point {y:?}"))
        })?;
        if !value.is_finite() {
            return Err(Error::Protocol(format!(
                "non-finite response {line:?} for point {y:?}"
            )));
        }
        Ok(value)
    }

    fn label(&self) -> String {
        format!("blackbox:{}", self.command.join(" "))
    }
}

impl Drop for BlackBox {
    fn drop(&mut self) {
        if let Ok(mut io) = self.io.lock() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// Declarative model description, as it appears in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    P1 {
        a: f64,
        delta: f64,
    },
    P2 {
        dprime: usize,
        radius: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        dim: usize,
    },
    P3 {
        dprime: usize,
        r1: f64,
        r2: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        dim: usize,
    },
    Blackbox {
        command: Vec<String>,
        dim: usize,
    },
}

fn default_scale() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::P1 { .. } => 2,
            ModelSpec::P2 { dim, .. } | ModelSpec::P3 { dim, .. } => *dim,
            ModelSpec::Blackbox { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match self {
            ModelSpec::P1 { delta, .. } => {
                if *delta <= 0.0 {
                    return bad(format!("p1 offset must be positive, got {delta}"));
                }
            }
            ModelSpec::P2 {
                dprime,
                radius,
                dim,
                ..
            } => {
                if *dprime == 0 || dim < dprime {
                    return bad(format!("p2 needs 1 <= dprime <= dim, got {dprime} and {dim}"));
                }
                if *radius <= 0.0 {
                    return bad(format!("p2 radius must be positive, got {radius}"));
                }
            }
            ModelSpec::P3 {
                dprime,
                r1,
                r2,
                dim,
                ..
            } => {
                if *dprime == 0 || *dim < 2 * dprime {
                    return bad(format!("p3 needs dim >= 2*dprime, got {dprime} and {dim}"));
                }
                if *r1 <= 0.0 || *r2 <= 0.0 {
                    return bad(format!("p3 radii must be positive, got {r1} and {r2}"));
                }
            }
            ModelSpec::Blackbox { command, dim } => {
                if command.is_empty() {
                    return bad("black-box command is empty".into());
                }
                if *dim == 0 {
                    return bad("black-box dimension must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    /// Instantiate the model; spawns the child process for a black box.
    pub fn build(&self) -> Result<Box<dyn Model>> {
        self.validate()?;
        Ok(match self {
            ModelSpec::P1 { a, delta } => Box::new(Ridge {
                a: *a,
                delta: *delta,
            }),
            ModelSpec::P2 {
                dprime,
                radius,
                scale,
                dim,
            } => Box::new(BallIndicator {
                dprime: *dprime,
                radius: *radius,
                scale: *scale,
                dim: *dim,
            }),
            ModelSpec::P3 {
                dprime,
                r1,
                r2,
                scale,
                dim,
            } => Box::new(TwoBallIndicator {
                dprime: *dprime,
                r1: *r1,
                r2: *r2,
                scale: *scale,
                dim: *dim,
            }),
            ModelSpec::Blackbox { command, dim } => Box::new(BlackBox::spawn(command, *dim)?),
        })
    }

    /// Problem label for record keys: `p1`, `p2`, `p3`, `blackbox`.
    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::P1 { .. } => "p1",
            ModelSpec::P2 { .. } => "p2",
            ModelSpec::P3 { .. } => "p3",
            ModelSpec::Blackbox { .. } => "blackbox",
        }
    }

    /// Compact parameter string for record keys.
    pub fn params_string(&self) -> String {
        match self {
            ModelSpec::P1 { a, delta } => format!("a={a};delta={delta}"),
            ModelSpec::P2 {
                dprime,
                radius,
                scale,
                ..
            } => format!("dprime={dprime};r={radius};c={scale}"),
            ModelSpec::P3 {
                dprime,
                r1,
                r2,
                scale,
                ..
            } => format!("dprime={dprime};r1={r1};r2={r2};c={scale}"),
            ModelSpec::Blackbox { command, .. } => format!("cmd={}", command.join(" ")),
        }
    }

    /// Exact mean where a closed form exists: ball indicators with radius
    /// at most 1, via the orthant volume of the `d'`-ball.
    pub fn analytic_mean(&self) -> Option<f64> {
        match self {
            ModelSpec::P2 {
                dprime,
                radius,
                scale,
                ..
            } if *radius <= 1.0 => Some(scale * orthant_ball_volume(*dprime, *radius)),
            ModelSpec::P3 {
                dprime,
                r1,
                r2,
                scale,
                ..
            } if *r1 <= 1.0 && *r2 <= 1.0 => Some(
                scale * (orthant_ball_volume(*dprime, *r1) + orthant_ball_volume(*dprime, *r2)),
            ),
            _ => None,
        }
    }
}

/// Volume of the radius-`r` ball in `d` dimensions restricted to the
/// non-negative orthant, `V_d(r)/2^d`, by the two-step volume recurrence
/// `V_d = (2πr²/d)·V_{d−2}`. Valid as the indicator's mean when `r ≤ 1`.
fn orthant_ball_volume(d: usize, r: f64) -> f64 {
    let mut even = 1.0; // V_0
    let mut odd = 2.0 * r; // V_1
    for k in 2..=d {
        let next = 2.0 * std::f64::consts::PI * r * r / k as f64 * if k % 2 == 0 { even } else { odd };
        if k % 2 == 0 {
            even = next;
        } else {
            odd = next;
        }
    }
    let volume = if d % 2 == 0 { even } else { odd };
    volume / 2f64.powi(d as i32)
}
