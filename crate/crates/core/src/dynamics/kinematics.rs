//! Planar forward kinematics, point Jacobians and velocity-product accelerations.

use super::model::{Anchor, BaseKind, Mechanism, ModelParams};

pub type Vec2 = [f64; 2];

/// Rotate a local vector by the absolute angle `phi`.
#[inline]
pub fn rotate(phi: f64, v: Vec2) -> Vec2 {
    let (s, c) = phi.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Quarter-turn counterclockwise: derivative direction of a rotating lever.
#[inline]
fn perp(v: Vec2) -> Vec2 {
    [-v[1], v[0]]
}

#[inline]
fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

/// Per-body frames for one configuration.
#[derive(Clone, Debug)]
pub struct Frames {
    pub angle: Vec<f64>,
    pub omega: Vec<f64>,
    pub origin: Vec<Vec2>,
    /// Origin acceleration with zero generalized acceleration.
    pub origin_bias_acc: Vec<Vec2>,
    /// World position of the pivot for each rotational generalized coordinate
    /// (`None` for translational base coordinates).
    pub pivot: Vec<Option<Vec2>>,
    /// Rotational generalized coordinates affecting each body, root first.
    pub deps: Vec<Vec<usize>>,
    base_translation: bool,
}

impl Frames {
    pub fn compute(mech: &Mechanism, params: &ModelParams, q: &[f64], qd: &[f64]) -> Self {
        let nb = mech.bodies.len();
        let n = mech.n_dofs();
        let mut angle = vec![0.0; nb];
        let mut omega = vec![0.0; nb];
        let mut origin = vec![[0.0; 2]; nb];
        let mut acc = vec![[0.0; 2]; nb];
        let mut pivot = vec![None; n];
        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); nb];
        let floating = mech.base == BaseKind::Floating;

        for (i, body) in mech.bodies.iter().enumerate() {
            match body.parent {
                None if floating => {
                    angle[i] = q[2];
                    omega[i] = qd[2];
                    origin[i] = [q[0], q[1]];
                    pivot[2] = Some(origin[i]);
                    deps[i] = vec![2];
                }
                None => {
                    let dof = mech.joint_dof(i).expect("fixed-base root has a joint");
                    let offset = match body.anchor {
                        Anchor::Offset(o) => o,
                        _ => [0.0, 0.0],
                    };
                    angle[i] = q[dof];
                    omega[i] = qd[dof];
                    origin[i] = offset;
                    pivot[dof] = Some(origin[i]);
                    deps[i] = vec![dof];
                }
                Some(p) => {
                    let dof = mech.joint_dof(i).expect("child body has a joint");
                    let local = match body.anchor {
                        Anchor::Origin => [0.0, 0.0],
                        Anchor::Tip => [0.0, -params.link_length[p]],
                        Anchor::Offset(o) => o,
                    };
                    let lever = rotate(angle[p], local);
                    origin[i] = add(origin[p], lever);
                    let w2 = omega[p] * omega[p];
                    acc[i] = [acc[p][0] - w2 * lever[0], acc[p][1] - w2 * lever[1]];
                    angle[i] = angle[p] + q[dof];
                    omega[i] = omega[p] + qd[dof];
                    pivot[dof] = Some(origin[i]);
                    let mut d = deps[p].clone();
                    d.push(dof);
                    deps[i] = d;
                }
            }
        }
        Frames {
            angle,
            omega,
            origin,
            origin_bias_acc: acc,
            pivot,
            deps,
            base_translation: floating,
        }
    }

    /// World position of a point given in body-local coordinates.
    pub fn point(&self, body: usize, local: Vec2) -> Vec2 {
        add(self.origin[body], rotate(self.angle[body], local))
    }

    /// 2×n Jacobian of a world point rigidly attached to `body`, row-major
    /// as `(jx, jz)`.
    pub fn point_jacobian(&self, body: usize, p: Vec2, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut jx = vec![0.0; n];
        let mut jz = vec![0.0; n];
        if self.base_translation {
            jx[0] = 1.0;
            jz[1] = 1.0;
        }
        for &c in &self.deps[body] {
            let pv = self.pivot[c].expect("rotational dof has a pivot");
            let d = perp(sub(p, pv));
            jx[c] = d[0];
            jz[c] = d[1];
        }
        (jx, jz)
    }

    /// Point velocity `J q̇`.
    pub fn point_velocity(&self, body: usize, p: Vec2, qd: &[f64]) -> Vec2 {
        let (jx, jz) = self.point_jacobian(body, p, qd.len());
        [dot(&jx, qd), dot(&jz, qd)]
    }

    /// Point acceleration at zero generalized acceleration, `J̇ q̇`.
    pub fn point_bias_acc(&self, body: usize, p: Vec2) -> Vec2 {
        let r = sub(p, self.origin[body]);
        let w2 = self.omega[body] * self.omega[body];
        [
            self.origin_bias_acc[body][0] - w2 * r[0],
            self.origin_bias_acc[body][1] - w2 * r[1],
        ]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// World CoM of every body.
pub fn body_coms(frames: &Frames, params: &ModelParams) -> Vec<Vec2> {
    (0..frames.origin.len())
        .map(|i| frames.point(i, params.link_com[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::model;

    #[test]
    fn pendulum_tip_position() {
        let (m, p) = model::pendulum(1.0, 1.0);
        let f = Frames::compute(&m, &p, &[std::f64::consts::FRAC_PI_2], &[0.0]);
        let com = f.point(0, p.link_com[0]);
        assert!((com[0] - 1.0).abs() < 1e-12 && com[1].abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let (m, p) = model::biped();
        let q = vec![0.1, 0.9, 0.2, 0.3, -0.5, 0.2, -0.1, -0.4, 0.3];
        let n = q.len();
        let f = Frames::compute(&m, &p, &q, &vec![0.0; n]);
        let local = [0.14, -0.06];
        let pt = f.point(3, local);
        let (jx, jz) = f.point_jacobian(3, pt, n);
        let h = 1e-6;
        for c in 0..n {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[c] += h;
            qm[c] -= h;
            let fp = Frames::compute(&m, &p, &qp, &vec![0.0; n]).point(3, local);
            let fm = Frames::compute(&m, &p, &qm, &vec![0.0; n]).point(3, local);
            assert!(((fp[0] - fm[0]) / (2.0 * h) - jx[c]).abs() < 1e-7);
            assert!(((fp[1] - fm[1]) / (2.0 * h) - jz[c]).abs() < 1e-7);
        }
    }

    #[test]
    fn bias_acceleration_matches_second_difference() {
        // p(q + t q̇) has second time derivative J̇ q̇ at t = 0.
        let (m, p) = model::biped();
        let q = vec![0.1, 0.9, 0.2, 0.3, -0.5, 0.2, -0.1, -0.4, 0.3];
        let qd = vec![0.3, -0.2, 0.7, -1.1, 0.4, 0.9, 0.5, -0.6, 1.3];
        let local = [-0.06, -0.06];
        let f = Frames::compute(&m, &p, &q, &qd);
        let a = f.point_bias_acc(6, f.point(6, local));
        let h = 1e-4;
        let at = |t: f64| {
            let qt: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a + t * b).collect();
            Frames::compute(&m, &p, &qt, &qd).point(6, local)
        };
        let (pp, p0, pm) = (at(h), at(0.0), at(-h));
        for k in 0..2 {
            let fd = (pp[k] - 2.0 * p0[k] + pm[k]) / (h * h);
            assert!((fd - a[k]).abs() < 1e-5, "{fd} vs {}", a[k]);
        }
    }
}
