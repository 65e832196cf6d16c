//! Structured multi-band quadrilateral meshes with planar sliding interfaces.
//!
//! The domain is split into vertical bands (subdomains) stacked along `x1`.
//! Every band is periodic in `x2` and may translate rigidly along `x2`; a
//! boundary between two bands with different grid velocities becomes a
//! sliding interface at `x1 = const`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::GridVelocity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    /// Elements across the band (along `x1`).
    pub n1: usize,
    /// Elements along the band; defaults to the mesh-wide `n2`.
    #[serde(default)]
    pub n2: Option<usize>,
    /// Grid velocity along `x2`.
    #[serde(default)]
    pub vg2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    pub n2: usize,
    #[serde(default = "default_true")]
    pub periodic_x1: bool,
    #[serde(rename = "band")]
    pub bands: Vec<BandSpec>,
}

fn default_true() -> bool {
    true
}

impl MeshSpec {
    /// Uniform `n x n` mesh of `[x0, x1]^2` split into three equal bands,
    /// the middle one translating with `vg2`.
    pub fn three_band(extent: [f64; 2], n: usize, vg2: f64) -> Self {
        assert!(n % 3 == 0, "three equal bands need n divisible by 3");
        let band = |vg2| BandSpec {
            n1: n / 3,
            n2: None,
            vg2,
        };
        Self {
            x1: extent,
            x2: extent,
            n2: n,
            periodic_x1: true,
            bands: vec![band(0.0), band(vg2), band(0.0)],
        }
    }

    pub fn single(extent: [f64; 2], n: usize) -> Self {
        Self {
            x1: extent,
            x2: extent,
            n2: n,
            periodic_x1: true,
            bands: vec![BandSpec {
                n1: n,
                n2: None,
                vg2: 0.0,
            }],
        }
    }

    /// Doubles (or scales) the element counts in both directions.
    pub fn refined(&self, factor: usize) -> Self {
        let mut out = self.clone();
        out.n2 *= factor;
        for b in &mut out.bands {
            b.n1 *= factor;
            b.n2 = b.n2.map(|n| n * factor);
        }
        out
    }

    pub fn total_n1(&self) -> usize {
        self.bands.iter().map(|b| b.n1).sum()
    }
}

/// Element sides in reference space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// `xi1 = -1`
    West = 0,
    /// `xi1 = +1`
    East = 1,
    /// `xi2 = -1`
    South = 2,
    /// `xi2 = +1`
    North = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    /// Outward unit normal.
    pub normal: [f64; 2],
    /// Surface Jacobian (physical length / 2).
    pub surf_jac: f64,
}

/// Constant metric terms of an affine element `x = x0 + a (xi1 + 1) + b (xi2 + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMetrics {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub jacobian: f64,
    /// Contravariant basis scaled by the Jacobian: `ja[i] = J grad(xi_i)`.
    pub ja: [[f64; 2]; 2],
    pub faces: [FaceGeometry; 4],
}

impl ElementMetrics {
    pub fn affine(a: [f64; 2], b: [f64; 2]) -> Result<Self> {
        let jacobian = a[0] * b[1] - a[1] * b[0];
        if !(jacobian > 0.0) {
            return Err(Error::Config(format!(
                "element with non-positive Jacobian {jacobian}"
            )));
        }
        let ja1 = [b[1], -b[0]];
        let ja2 = [-a[1], a[0]];
        let geom = |v: [f64; 2], sign: f64| {
            let len = v[0].hypot(v[1]);
            FaceGeometry {
                normal: [sign * v[0] / len, sign * v[1] / len],
                surf_jac: len,
            }
        };
        Ok(Self {
            a,
            b,
            jacobian,
            ja: [ja1, ja2],
            faces: [geom(ja1, -1.0), geom(ja1, 1.0), geom(ja2, -1.0), geom(ja2, 1.0)],
        })
    }

    /// Characteristic size used by the time-step estimate.
    pub fn min_edge(&self) -> f64 {
        (2.0 * self.a[0].hypot(self.a[1])).min(2.0 * self.b[0].hypot(self.b[1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: usize,
    pub subdomain: usize,
    pub i1: usize,
    pub i2: usize,
    /// Lower-left corner at `t = 0`.
    pub origin: [f64; 2],
    pub metrics: ElementMetrics,
    pub motion: GridVelocity,
}

impl Element {
    /// Physical position of reference point `xi` at time `t`.
    pub fn position(&self, xi: [f64; 2], t: f64) -> [f64; 2] {
        let m = &self.metrics;
        [
            self.origin[0] + m.a[0] * (xi[0] + 1.0) + m.b[0] * (xi[1] + 1.0) + self.motion.vg1 * t,
            self.origin[1] + m.a[1] * (xi[0] + 1.0) + m.b[1] * (xi[1] + 1.0) + self.motion.vg2 * t,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub id: usize,
    pub motion: GridVelocity,
    pub n1: usize,
    pub n2: usize,
    pub x1_range: [f64; 2],
    pub first_element: usize,
}

impl Subdomain {
    pub fn n_elements(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_moving(&self) -> bool {
        self.motion != GridVelocity::ZERO
    }

    pub fn element_id(&self, i1: usize, i2: usize) -> usize {
        self.first_element + i2 * self.n1 + i1
    }
}

/// Face shared by two elements with aligned nodes.
///
/// The minus element is the primary side: it evaluates the Riemann flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformingFace {
    pub id: usize,
    pub minus: (usize, Side),
    pub plus: (usize, Side),
    /// Outward normal of the minus element.
    pub normal: [f64; 2],
    pub surf_jac: f64,
    pub vg_normal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub id: usize,
    pub element: usize,
    pub side: Side,
    pub normal: [f64; 2],
    pub surf_jac: f64,
    pub vg_normal: f64,
}

/// An element face lying on a sliding interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfaceFace {
    pub element: usize,
    pub side: Side,
    /// Index along the interface in the frame of its own subdomain.
    pub i_par: usize,
    pub i_perp: usize,
}

/// Relative displacement `delta = (n_delta + s_delta) l_par`, kept as a face
/// count plus a sub-face offset so the fraction never drifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Displacement {
    pub n_delta: i64,
    /// `s_delta * l_par`, in `[0, l_par)`.
    pub offset: f64,
    pub l_par: f64,
}

impl Displacement {
    pub fn new(l_par: f64) -> Self {
        Self {
            n_delta: 0,
            offset: 0.0,
            l_par,
        }
    }

    pub fn delta(&self) -> f64 {
        self.n_delta as f64 * self.l_par + self.offset
    }

    pub fn s_delta(&self) -> f64 {
        self.offset / self.l_par
    }

    /// Displacement shifted by `shift` without committing it.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = *self;
        out.offset += shift;
        while out.offset >= out.l_par {
            out.offset -= out.l_par;
            out.n_delta += 1;
        }
        while out.offset < 0.0 {
            out.offset += out.l_par;
            out.n_delta -= 1;
        }
        out
    }

    /// Commits a shift; returns whether the surpassed face count changed.
    pub fn advance(&mut self, shift: f64) -> bool {
        let next = self.shifted(shift);
        let changed = next.n_delta != self.n_delta;
        *self = next;
        changed
    }

    /// `n_delta` reduced into `0..n_faces`.
    pub fn n_delta_mod(&self, n_faces: usize) -> usize {
        self.n_delta.rem_euclid(n_faces as i64) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidingInterface {
    pub id: usize,
    /// Interface line `x1 = position`.
    pub position: f64,
    pub static_subdomain: usize,
    pub moving_subdomain: usize,
    /// Static-side faces indexed by `i_par`.
    pub static_faces: Vec<InterfaceFace>,
    /// Moving-side faces indexed by their own parallel index.
    pub moving_faces: Vec<InterfaceFace>,
    /// Outward normal of the static faces.
    pub static_normal: [f64; 2],
    pub l_par: f64,
    pub n_faces_par: usize,
    /// Moving minus static grid velocity along the interface.
    pub relative_velocity: f64,
    pub displacement: Displacement,
}

impl SlidingInterface {
    pub fn n_perp(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementUpdate {
    pub delta: f64,
    pub n_delta: i64,
    pub s_delta: f64,
    pub changed: bool,
}

/// Advances the interface by `dt` of relative motion.
pub fn advance_displacement(iface: &mut SlidingInterface, dt: f64) -> DisplacementUpdate {
    let changed = iface
        .displacement
        .advance(iface.relative_velocity * dt);
    let d = iface.displacement;
    DisplacementUpdate {
        delta: d.delta(),
        n_delta: d.n_delta,
        s_delta: d.s_delta(),
        changed,
    }
}

/// Hanging-node position in the static face's reference coordinate.
pub fn sigma_from_displacement(s_delta: f64) -> f64 {
    2.0 * s_delta - 1.0
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub spec: MeshSpec,
    pub subdomains: Vec<Subdomain>,
    pub elements: Vec<Element>,
    pub conforming: Vec<ConformingFace>,
    pub boundary: Vec<BoundaryFace>,
    pub interfaces: Vec<SlidingInterface>,
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn x2_period(&self) -> f64 {
        self.spec.x2[1] - self.spec.x2[0]
    }
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh> {
    if spec.bands.is_empty() {
        return Err(Error::Config("mesh needs at least one band".into()));
    }
    let lx = spec.x1[1] - spec.x1[0];
    let ly = spec.x2[1] - spec.x2[0];
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::Config("mesh extents must be positive".into()));
    }
    if spec.n2 == 0 || spec.bands.iter().any(|b| b.n1 == 0) {
        return Err(Error::Config("element counts must be positive".into()));
    }
    for (k, b) in spec.bands.iter().enumerate() {
        if let Some(n2) = b.n2 {
            if n2 != spec.n2 {
                return Err(Error::Config(format!(
                    "band {k} has {n2} faces along the interface, expected {}: interface faces must be equispaced with a common length",
                    spec.n2
                )));
            }
        }
        if !b.vg2.is_finite() {
            return Err(Error::Config(format!("band {k} has non-finite grid velocity")));
        }
    }

    let n1_total = spec.total_n1();
    let n2 = spec.n2;
    let dx = lx / n1_total as f64;
    let dy = ly / n2 as f64;
    let metrics = ElementMetrics::affine([0.5 * dx, 0.0], [0.0, 0.5 * dy])?;

    let mut subdomains = Vec::with_capacity(spec.bands.len());
    let mut elements = Vec::with_capacity(n1_total * n2);
    // global column -> (band, local i1)
    let mut columns = Vec::with_capacity(n1_total);
    let mut col0 = 0;
    for (k, band) in spec.bands.iter().enumerate() {
        let first = elements.len();
        let motion = GridVelocity::new(0.0, band.vg2);
        for i2 in 0..n2 {
            for i1 in 0..band.n1 {
                elements.push(Element {
                    id: elements.len(),
                    subdomain: k,
                    i1,
                    i2,
                    origin: [
                        spec.x1[0] + (col0 + i1) as f64 * dx,
                        spec.x2[0] + i2 as f64 * dy,
                    ],
                    metrics,
                    motion,
                });
            }
        }
        for i1 in 0..band.n1 {
            columns.push((k, i1));
        }
        subdomains.push(Subdomain {
            id: k,
            motion,
            n1: band.n1,
            n2,
            x1_range: [
                spec.x1[0] + col0 as f64 * dx,
                spec.x1[0] + (col0 + band.n1) as f64 * dx,
            ],
            first_element: first,
        });
        col0 += band.n1;
    }

    let mut conforming = Vec::new();
    let mut boundary = Vec::new();
    let mut interfaces = Vec::new();

    let face_geom = |side: Side| metrics.faces[side.index()];

    // faces normal to x1, column by column
    for c in 0..n1_total {
        let (band_l, i1_l) = columns[c];
        let sub_l = &subdomains[band_l];
        if c == 0 && !spec.periodic_x1 {
            for i2 in 0..n2 {
                let g = face_geom(Side::West);
                boundary.push(BoundaryFace {
                    id: boundary.len(),
                    element: sub_l.element_id(i1_l, i2),
                    side: Side::West,
                    normal: g.normal,
                    surf_jac: g.surf_jac,
                    vg_normal: sub_l.motion.normal(g.normal),
                });
            }
        }
        let next = if c + 1 < n1_total {
            Some(c + 1)
        } else if spec.periodic_x1 {
            Some(0)
        } else {
            None
        };
        let Some(cn) = next else {
            for i2 in 0..n2 {
                let g = face_geom(Side::East);
                boundary.push(BoundaryFace {
                    id: boundary.len(),
                    element: sub_l.element_id(i1_l, i2),
                    side: Side::East,
                    normal: g.normal,
                    surf_jac: g.surf_jac,
                    vg_normal: sub_l.motion.normal(g.normal),
                });
            }
            continue;
        };
        let (band_r, i1_r) = columns[cn];
        let sub_r = &subdomains[band_r];
        if sub_l.motion == sub_r.motion {
            for i2 in 0..n2 {
                let g = face_geom(Side::East);
                conforming.push(ConformingFace {
                    id: conforming.len(),
                    minus: (sub_l.element_id(i1_l, i2), Side::East),
                    plus: (sub_r.element_id(i1_r, i2), Side::West),
                    normal: g.normal,
                    surf_jac: g.surf_jac,
                    vg_normal: sub_l.motion.normal(g.normal),
                });
            }
        } else {
            // static side: the slower band, ties to the left one
            let left_static = sub_l.motion.vg2.abs() <= sub_r.motion.vg2.abs();
            let (st, mv, st_i1, mv_i1, st_side, mv_side) = if left_static {
                (sub_l, sub_r, i1_l, i1_r, Side::East, Side::West)
            } else {
                (sub_r, sub_l, i1_r, i1_l, Side::West, Side::East)
            };
            let collect = |sub: &Subdomain, i1: usize, side: Side| {
                (0..n2)
                    .map(|i2| InterfaceFace {
                        element: sub.element_id(i1, i2),
                        side,
                        i_par: i2,
                        i_perp: 0,
                    })
                    .collect::<Vec<_>>()
            };
            interfaces.push(SlidingInterface {
                id: interfaces.len(),
                position: if cn == 0 {
                    spec.x1[1]
                } else {
                    sub_r.x1_range[0]
                },
                static_subdomain: st.id,
                moving_subdomain: mv.id,
                static_faces: collect(st, st_i1, st_side),
                moving_faces: collect(mv, mv_i1, mv_side),
                static_normal: face_geom(st_side).normal,
                l_par: dy,
                n_faces_par: n2,
                relative_velocity: mv.motion.vg2 - st.motion.vg2,
                displacement: Displacement::new(dy),
            });
        }
    }

    // faces normal to x2, periodic within every band
    for sub in &subdomains {
        for i2 in 0..n2 {
            let i2n = (i2 + 1) % n2;
            for i1 in 0..sub.n1 {
                let g = face_geom(Side::North);
                conforming.push(ConformingFace {
                    id: conforming.len(),
                    minus: (sub.element_id(i1, i2), Side::North),
                    plus: (sub.element_id(i1, i2n), Side::South),
                    normal: g.normal,
                    surf_jac: g.surf_jac,
                    vg_normal: sub.motion.normal(g.normal),
                });
            }
        }
    }

    Ok(Mesh {
        spec: spec.clone(),
        subdomains,
        elements,
        conforming,
        boundary,
        interfaces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn three_band_mesh_has_two_interfaces() {
        let mesh = build_mesh(&MeshSpec::three_band([0.0, 2.0], 6, 1.0)).unwrap();
        assert_eq!(mesh.n_elements(), 36);
        assert_eq!(mesh.interfaces.len(), 2);
        for iface in &mesh.interfaces {
            assert_eq!(iface.static_faces.len(), 6);
            assert_eq!(iface.moving_faces.len(), 6);
            assert_eq!(iface.moving_subdomain, 1);
            assert_abs_diff_eq!(iface.l_par, 1.0 / 3.0, epsilon = 1e-15);
            assert_eq!(iface.relative_velocity, 1.0);
        }
        assert_eq!(mesh.interfaces[0].static_normal, [1.0, 0.0]);
        assert_eq!(mesh.interfaces[1].static_normal, [-1.0, 0.0]);
        // 36 north faces + 6 rows x (6 columns - 2 sliding)
        assert_eq!(mesh.conforming.len(), 36 + 24);
        assert!(mesh.boundary.is_empty());
    }

    #[test]
    fn single_subdomain_is_conforming() {
        let mesh = build_mesh(&MeshSpec::single([0.0, 1.0], 4)).unwrap();
        assert!(mesh.interfaces.is_empty());
        assert_eq!(mesh.conforming.len(), 32);
    }

    #[test]
    fn mismatched_interface_spacing_rejected() {
        let mut spec = MeshSpec::three_band([0.0, 2.0], 6, 1.0);
        spec.bands[1].n2 = Some(4);
        assert!(matches!(build_mesh(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn nonperiodic_x1_has_boundaries() {
        let mut spec = MeshSpec::three_band([0.0, 3.0], 3, 0.5);
        spec.periodic_x1 = false;
        let mesh = build_mesh(&spec).unwrap();
        assert_eq!(mesh.boundary.len(), 6);
        assert_eq!(mesh.interfaces.len(), 2);
    }

    #[test]
    fn metrics_free_stream_identity() {
        // discrete divergence of a constant contravariant flux vanishes:
        // sum over faces of normal * surf_jac is zero
        let m = ElementMetrics::affine([0.3, 0.1], [-0.05, 0.4]).unwrap();
        let mut s = [0.0; 2];
        for f in m.faces {
            s[0] += f.normal[0] * f.surf_jac;
            s[1] += f.normal[1] * f.surf_jac;
        }
        assert_abs_diff_eq!(s[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-15);
        assert!(ElementMetrics::affine([0.0, 1.0], [1.0, 0.0]).is_err());
    }

    #[test]
    fn displacement_examples() {
        let mesh = build_mesh(&MeshSpec {
            x1: [0.0, 3.0],
            x2: [0.0, 4.0],
            n2: 4,
            periodic_x1: true,
            bands: vec![
                BandSpec { n1: 1, n2: None, vg2: 0.0 },
                BandSpec { n1: 1, n2: None, vg2: 1.0 },
                BandSpec { n1: 1, n2: None, vg2: 0.0 },
            ],
        })
        .unwrap();
        let mut iface = mesh.interfaces[0].clone();
        let u = advance_displacement(&mut iface, 0.4);
        assert_eq!((u.n_delta, u.changed), (0, false));
        assert_abs_diff_eq!(u.s_delta, 0.4, epsilon = 1e-15);
        let u = advance_displacement(&mut iface, 0.5);
        assert!(!u.changed);
        let u = advance_displacement(&mut iface, 0.2);
        assert_eq!((u.n_delta, u.changed), (1, true));
        assert_abs_diff_eq!(u.s_delta, 0.1, epsilon = 1e-14);

        let mut d = Displacement::new(1.0);
        assert!(d.advance(1.0));
        assert_eq!((d.n_delta, d.s_delta()), (1, 0.0));
    }

    #[test]
    fn displacement_period_restores_configuration() {
        let mut d = Displacement::new(0.25);
        d.advance(0.1);
        let start = d;
        for _ in 0..8 {
            d.advance(0.25);
        }
        assert_eq!(d.n_delta_mod(8), start.n_delta_mod(8));
        assert_abs_diff_eq!(d.offset, start.offset, epsilon = 1e-14);
    }

    #[test]
    fn negative_motion_wraps_down() {
        let mut d = Displacement::new(1.0);
        assert!(d.advance(-0.25));
        assert_eq!(d.n_delta, -1);
        assert_abs_diff_eq!(d.s_delta(), 0.75);
        assert_eq!(d.n_delta_mod(6), 5);
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_from_displacement(0.5), 0.0);
        assert_eq!(sigma_from_displacement(0.0), -1.0);
        assert_eq!(sigma_from_displacement(0.25), -0.5);
    }

    #[test]
    fn moving_element_positions_translate() {
        let mesh = build_mesh(&MeshSpec::three_band([0.0, 3.0], 3, 2.0)).unwrap();
        let e = &mesh.elements[mesh.subdomains[1].element_id(0, 0)];
        let p0 = e.position([-1.0, -1.0], 0.0);
        let p1 = e.position([-1.0, -1.0], 0.5);
        assert_eq!(p0, [1.0, 0.0]);
        assert_abs_diff_eq!(p1[1] - p0[1], 1.0);
        assert_eq!(p1[0], p0[0]);
    }
}
