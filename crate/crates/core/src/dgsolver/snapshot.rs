//! Binary solution snapshots: an ASCII header followed by little-endian
//! `f64` records `x1 x2 rho rhov1 rhov2 rhoe`, one per node, ordered by
//! element, then `j`, then `i`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::SolutionField;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::physics::StateVec;
use crate::polybasis::NodeSet;

const MAGIC: &str = "SLIDEMESH-FIELD 1";
const VARS: &str = "x1 x2 rho rhov1 rhov2 rhoe";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub degree: usize,
    pub n_elements: usize,
    pub time: f64,
    pub coords: Vec<[f64; 2]>,
    pub states: Vec<StateVec>,
}

/// Writes `field` with physical node positions at `field.time`.
pub fn write_snapshot(path: &Path, field: &SolutionField, mesh: &Mesh, nodes: &NodeSet) -> Result<()> {
    let np = nodes.len();
    let x = nodes.nodes();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "degree {}", field.degree)?;
    writeln!(w, "nodes {}", field.data.len())?;
    writeln!(w, "elements {}", field.elements.len())?;
    writeln!(w, "time {:e}", field.time)?;
    writeln!(w, "vars {VARS}")?;
    writeln!(w, "end_header")?;
    for (k, &e) in field.elements.iter().enumerate() {
        let el = &mesh.elements[e];
        let u = field.element(k);
        for j in 0..np {
            for i in 0..np {
                let p = el.position([x[i], x[j]], field.time);
                let s = u[j * np + i];
                for v in [p[0], p[1], s[0], s[1], s[2], s[3]] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn header_value<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Config(format!("snapshot header: expected '{key}', got '{line}'")))
}

fn parse<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("snapshot header: bad value for '{key}': '{s}'")))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(File::open(path)?);
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Config("snapshot header is not terminated".into()));
        }
        let line = line.trim_end().to_string();
        if line == "end_header" {
            break;
        }
        lines.push(line);
    }
    if lines.len() != 6 || lines[0] != MAGIC {
        return Err(Error::Config("not a slidemesh snapshot".into()));
    }
    let degree: usize = parse(header_value(&lines[1], "degree")?, "degree")?;
    let n_nodes: usize = parse(header_value(&lines[2], "nodes")?, "nodes")?;
    let n_elements: usize = parse(header_value(&lines[3], "elements")?, "elements")?;
    let time: f64 = parse(header_value(&lines[4], "time")?, "time")?;
    if header_value(&lines[5], "vars")? != VARS {
        return Err(Error::Config(format!("unsupported snapshot variables '{}'", lines[5])));
    }
    if n_nodes != n_elements * (degree + 1) * (degree + 1) {
        return Err(Error::Config("snapshot node count does not match its elements".into()));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != n_nodes * 6 * 8 {
        return Err(Error::Config(format!(
            "snapshot payload has {} bytes, expected {}",
            bytes.len(),
            n_nodes * 48
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let (coords, states) = vals
        .chunks_exact(6)
        .map(|c| ([c[0], c[1]], [c[2], c[3], c[4], c[5]]))
        .unzip();
    Ok(Snapshot {
        degree,
        n_elements,
        time,
        coords,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshSpec};
    use crate::polybasis::{build_node_set, NodeKind};

    #[test]
    fn round_trip() {
        let mesh = build_mesh(&MeshSpec::single([0.0, 2.0], 2)).unwrap();
        let nodes = build_node_set(2, NodeKind::LegendreGaussLobatto).unwrap();
        let elems: Vec<usize> = (0..mesh.n_elements()).collect();
        let field = SolutionField::from_fn(&mesh, &nodes, &elems, 0.25, |x| [x[0], x[1], 1.0, -2.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_snapshot(&path, &field, &mesh, &nodes).unwrap();
        let snap = read_snapshot(&path).unwrap();
        assert_eq!(snap.degree, 2);
        assert_eq!(snap.n_elements, 4);
        assert_eq!(snap.time, 0.25);
        assert_eq!(snap.states, field.data);
        for (c, s) in snap.coords.iter().zip(&snap.states) {
            assert_eq!([s[0], s[1]], *c);
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(
            &path,
            format!("{MAGIC}\ndegree 1\nnodes 4\nelements 1\ntime 0e0\nvars {VARS}\nend_header\n"),
        )
        .unwrap();
        assert!(read_snapshot(&path).is_err());
    }
}
