//! Mechanism topology and the numeric parameters that dynamics depends on.
//!
//! A [`Mechanism`] is the fixed structure: which body hangs off which, where
//! contact points sit and what the default pose is. [`ModelParams`] holds every
//! number a randomizer may touch. Keeping the two apart lets two parameter sets
//! share one topology, which is what the equivalence oracle compares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the root of the kinematic tree is attached to the world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseKind {
    /// Root bodies are pinned by a revolute joint at the world origin.
    Fixed,
    /// Body 0 is a free planar base with coordinates (x, z, pitch).
    Floating,
}

/// Where a body's joint sits on its parent, in the parent's local frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Anchor {
    /// Parent origin.
    Origin,
    /// Parent tip, `(0, -link_length[parent])`.
    Tip,
    /// Explicit local offset `[along x, along z]`.
    Offset([f64; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub name: String,
    /// `None` means attached to the world (fixed base) or the floating base itself.
    pub parent: Option<usize>,
    pub anchor: Anchor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactKind {
    Foot(Side),
    /// Any non-foot collision point; touching the ground ends a training episode.
    Link,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub body: usize,
    pub local: [f64; 2],
    pub kind: ContactKind,
}

/// Fixed structure of a planar articulated mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub base: BaseKind,
    /// Topologically ordered: every parent precedes its children.
    pub bodies: Vec<Body>,
    pub contacts: Vec<ContactPoint>,
    /// Default joint configuration (also the equilibrium of joint stiffness).
    pub q_default: Vec<f64>,
    /// Nominal standing base height, used for termination bands.
    pub nominal_base_height: f64,
    /// Joint limits, symmetric about zero, used by the joint-limit reward.
    pub joint_limits: Vec<f64>,
}

impl Mechanism {
    pub fn base_dofs(&self) -> usize {
        match self.base {
            BaseKind::Fixed => 0,
            BaseKind::Floating => 3,
        }
    }

    pub fn n_joints(&self) -> usize {
        self.bodies.len() - self.base_bodies()
    }

    pub fn n_dofs(&self) -> usize {
        self.base_dofs() + self.n_joints()
    }

    pub(crate) fn base_bodies(&self) -> usize {
        match self.base {
            BaseKind::Fixed => 0,
            BaseKind::Floating => 1,
        }
    }

    /// Generalized coordinate index of the joint driving `body`, if any.
    pub fn joint_dof(&self, body: usize) -> Option<usize> {
        match self.base {
            BaseKind::Fixed => Some(body),
            BaseKind::Floating if body == 0 => None,
            BaseKind::Floating => Some(3 + body - 1),
        }
    }

    pub fn foot_contacts(&self, side: Side) -> impl Iterator<Item = (usize, &ContactPoint)> {
        self.contacts
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.kind == ContactKind::Foot(side))
    }

    /// Body index carrying the given foot's contact points.
    pub fn foot_body(&self, side: Side) -> Option<usize> {
        self.foot_contacts(side).next().map(|(_, c)| c.body)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bodies.is_empty() {
            return Err(Error::Config("mechanism has no bodies".into()));
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if let Some(p) = b.parent {
                if p >= i {
                    return Err(Error::Config(format!(
                        "body `{}` listed before its parent",
                        b.name
                    )));
                }
            } else if self.base == BaseKind::Floating && i != 0 {
                return Err(Error::Config(format!(
                    "body `{}` has no parent on a floating-base mechanism",
                    b.name
                )));
            }
        }
        if self.q_default.len() != self.n_joints() || self.joint_limits.len() != self.n_joints() {
            return Err(Error::Config("default pose / limits do not match joint count".into()));
        }
        if self.contacts.iter().any(|c| c.body >= self.bodies.len()) {
            return Err(Error::Config("contact point on unknown body".into()));
        }
        Ok(())
    }

    /// Full generalized default configuration with the base at `base_height`.
    pub fn default_q(&self, base_height: f64) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.n_dofs());
        if self.base == BaseKind::Floating {
            q.extend_from_slice(&[0.0, base_height, 0.0]);
        }
        q.extend_from_slice(&self.q_default);
        q
    }
}

/// Every numeric quantity the dynamics depends on.
///
/// Per-body arrays are indexed like [`Mechanism::bodies`]; per-joint arrays
/// like the joint coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_joints: usize,
    pub link_mass: Vec<f64>,
    /// CoM offset in the link frame, `[x, z]`.
    pub link_com: Vec<[f64; 2]>,
    pub link_inertia: Vec<f64>,
    pub link_length: Vec<f64>,
    pub joint_damping: Vec<f64>,
    pub joint_armature: Vec<f64>,
    pub joint_stiffness: Vec<f64>,
    pub joint_friction_loss: Vec<f64>,
    pub torque_limit: Vec<f64>,
    pub motor_constant_scale: Vec<f64>,
    pub contact_stiffness_time_const: f64,
    pub contact_damping_ratio: f64,
    /// Mass scale that turns the time constant into a spring stiffness.
    pub contact_reference_mass: f64,
    pub contact_friction_coeff: f64,
    /// Tangential speed at which friction reaches ~76% of the Coulomb cap.
    pub contact_slip_velocity: f64,
    pub gravity: f64,
}

/// Velocity scale of the smooth dry-friction model.
pub const JOINT_FRICTION_EPS: f64 = 1e-2;

impl ModelParams {
    pub fn validate(&self, mech: &Mechanism) -> Result<()> {
        let nb = mech.bodies.len();
        let nj = mech.n_joints();
        if self.n_joints != nj {
            return Err(Error::Dimension {
                context: "ModelParams::n_joints",
                expected: nj,
                got: self.n_joints,
            });
        }
        for (name, len, want) in [
            ("link_mass", self.link_mass.len(), nb),
            ("link_com", self.link_com.len(), nb),
            ("link_inertia", self.link_inertia.len(), nb),
            ("link_length", self.link_length.len(), nb),
            ("joint_damping", self.joint_damping.len(), nj),
            ("joint_armature", self.joint_armature.len(), nj),
            ("joint_stiffness", self.joint_stiffness.len(), nj),
            ("joint_friction_loss", self.joint_friction_loss.len(), nj),
            ("torque_limit", self.torque_limit.len(), nj),
            ("motor_constant_scale", self.motor_constant_scale.len(), nj),
        ] {
            if len != want {
                return Err(Error::Config(format!(
                    "{name} has {len} entries, mechanism needs {want}"
                )));
            }
        }
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            if v.iter().all(|x| x.is_finite() && *x > 0.0) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be strictly positive")))
            }
        };
        let non_negative = |name: &str, v: &[f64]| -> Result<()> {
            if v.iter().all(|x| x.is_finite() && *x >= 0.0) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be non-negative")))
            }
        };
        positive("link_mass", &self.link_mass)?;
        positive("link_inertia", &self.link_inertia)?;
        positive("link_length", &self.link_length)?;
        positive(
            "contact constants",
            &[
                self.contact_stiffness_time_const,
                self.contact_damping_ratio,
                self.contact_reference_mass,
                self.contact_slip_velocity,
            ],
        )?;
        non_negative("joint_damping", &self.joint_damping)?;
        non_negative("joint_armature", &self.joint_armature)?;
        non_negative("joint_stiffness", &self.joint_stiffness)?;
        non_negative("joint_friction_loss", &self.joint_friction_loss)?;
        non_negative("torque_limit", &self.torque_limit)?;
        non_negative("motor_constant_scale", &self.motor_constant_scale)?;
        non_negative("contact_friction_coeff", &[self.contact_friction_coeff])?;
        if self.link_com.iter().flatten().any(|x| !x.is_finite()) || !self.gravity.is_finite() {
            return Err(Error::Config("non-finite link CoM or gravity".into()));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.link_mass.iter().sum()
    }

    /// Contact spring stiffness [N/m] derived from the time constant.
    pub fn contact_stiffness(&self) -> f64 {
        let t = self.contact_stiffness_time_const;
        let z = self.contact_damping_ratio;
        self.contact_reference_mass / (t * t * z * z)
    }

    /// Contact damper coefficient [N·s/m].
    pub fn contact_damping(&self) -> f64 {
        2.0 * self.contact_reference_mass / self.contact_stiffness_time_const
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

fn passive_joint_defaults(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n])
}

/// A single pendulum: one link hanging from the world origin, point-like mass
/// at distance `length`.
pub fn pendulum(mass: f64, length: f64) -> (Mechanism, ModelParams) {
    chain(&[mass], &[length])
}

/// A serial chain hanging from the world origin, CoM at each link tip.
pub fn chain(masses: &[f64], lengths: &[f64]) -> (Mechanism, ModelParams) {
    let n = masses.len();
    assert_eq!(n, lengths.len());
    let bodies = (0..n)
        .map(|i| Body {
            name: format!("link{i}"),
            parent: if i == 0 { None } else { Some(i - 1) },
            anchor: if i == 0 { Anchor::Origin } else { Anchor::Tip },
        })
        .collect();
    let mech = Mechanism {
        base: BaseKind::Fixed,
        bodies,
        contacts: Vec::new(),
        q_default: vec![0.0; n],
        nominal_base_height: 0.0,
        joint_limits: vec![std::f64::consts::PI; n],
    };
    let (damping, armature, stiffness, friction) = passive_joint_defaults(n);
    let params = ModelParams {
        n_joints: n,
        link_mass: masses.to_vec(),
        link_com: lengths.iter().map(|l| [0.0, -l]).collect(),
        link_inertia: masses.iter().map(|m| 1e-2 * m).collect(),
        link_length: lengths.to_vec(),
        joint_damping: damping,
        joint_armature: armature,
        joint_stiffness: stiffness,
        joint_friction_loss: friction,
        torque_limit: vec![1e3; n],
        motor_constant_scale: vec![1.0; n],
        contact_stiffness_time_const: 0.02,
        contact_damping_ratio: 1.0,
        contact_reference_mass: 10.0,
        contact_friction_coeff: 1.0,
        contact_slip_velocity: 0.1,
        gravity: 9.81,
    };
    (mech, params)
}

/// Leg segment lengths of the desk biped.
pub const THIGH_LENGTH: f64 = 0.45;
pub const SHANK_LENGTH: f64 = 0.45;
pub const FOOT_HEIGHT: f64 = 0.06;
/// Half crouch angle of the default pose.
pub const CROUCH: f64 = 0.3;

/// Joint order of the biped: hip, knee, ankle for the left leg, then the right.
pub const BIPED_JOINTS: [&str; 6] = ["hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r"];

/// Planar floating-base biped: torso plus hip/knee/ankle per leg, heel and toe
/// contacts per foot, ~31 kg.
pub fn biped() -> (Mechanism, ModelParams) {
    let mut bodies = vec![Body {
        name: "torso".into(),
        parent: None,
        anchor: Anchor::Origin,
    }];
    for side in ["l", "r"] {
        let base = bodies.len();
        bodies.push(Body {
            name: format!("thigh_{side}"),
            parent: Some(0),
            anchor: Anchor::Origin,
        });
        bodies.push(Body {
            name: format!("shank_{side}"),
            parent: Some(base),
            anchor: Anchor::Tip,
        });
        bodies.push(Body {
            name: format!("foot_{side}"),
            parent: Some(base + 1),
            anchor: Anchor::Tip,
        });
    }
    let mut contacts = Vec::new();
    for (side, foot) in [(Side::Left, 3), (Side::Right, 6)] {
        contacts.push(ContactPoint {
            body: foot,
            local: [-0.06, -FOOT_HEIGHT],
            kind: ContactKind::Foot(side),
        });
        contacts.push(ContactPoint {
            body: foot,
            local: [0.14, -FOOT_HEIGHT],
            kind: ContactKind::Foot(side),
        });
        // knee
        contacts.push(ContactPoint {
            body: foot - 1,
            local: [0.0, 0.0],
            kind: ContactKind::Link,
        });
    }
    // hip and head
    contacts.push(ContactPoint {
        body: 0,
        local: [0.0, 0.0],
        kind: ContactKind::Link,
    });
    contacts.push(ContactPoint {
        body: 0,
        local: [0.0, 0.5],
        kind: ContactKind::Link,
    });
    let leg_default = [CROUCH, -2.0 * CROUCH, CROUCH];
    let q_default = [leg_default, leg_default].concat();
    let nominal_base_height = (THIGH_LENGTH + SHANK_LENGTH) * CROUCH.cos() + FOOT_HEIGHT;
    let mech = Mechanism {
        base: BaseKind::Floating,
        bodies,
        contacts,
        q_default,
        nominal_base_height,
        joint_limits: [[1.2, 2.2, 0.9], [1.2, 2.2, 0.9]].concat(),
    };

    let leg_mass = [4.0, 2.5, 1.0];
    let leg_com = [[0.0, -0.2], [0.0, -0.2], [0.04, -0.04]];
    let leg_inertia = [0.07, 0.045, 0.006];
    let leg_length = [THIGH_LENGTH, SHANK_LENGTH, FOOT_HEIGHT];
    let twice = |a: [f64; 3]| [a, a].concat();
    let params = ModelParams {
        n_joints: 6,
        link_mass: [vec![16.0], twice(leg_mass)].concat(),
        link_com: [vec![[0.0, 0.25]], [leg_com, leg_com].concat()].concat(),
        link_inertia: [vec![0.8], twice(leg_inertia)].concat(),
        link_length: [vec![0.5], twice(leg_length)].concat(),
        joint_damping: twice([0.5, 0.5, 0.3]),
        joint_armature: twice([0.2, 0.2, 0.1]),
        joint_stiffness: vec![0.0; 6],
        joint_friction_loss: twice([0.2, 0.2, 0.1]),
        torque_limit: twice([100.0, 100.0, 50.0]),
        motor_constant_scale: vec![1.0; 6],
        contact_stiffness_time_const: 0.02,
        contact_damping_ratio: 1.0,
        contact_reference_mass: 6.0,
        contact_friction_coeff: 1.0,
        contact_slip_velocity: 0.1,
        gravity: 9.81,
    };
    (mech, params)
}
