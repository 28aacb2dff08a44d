//! Versioned text dump of an occupancy map.
//!
//! ```text
//! rmpnav-map 1
//! min_cell_size 0.1
//! bounds 0 0 0 4 4 4
//! num_levels 16
//! unknown_as_occupied false
//! occupied 2
//! 10 10 10
//! 10 10 11
//! ```
//!
//! Cell indices are relative to the grid corner at `bounds.min`. Lines
//! starting with `#` are ignored.

use std::fmt::Write as _;

use rmpnav_core::octree::{OctreeBuilder, OctreeConfig};
use rmpnav_core::{Aabb, OccupancyOctree};

pub const MAGIC: &str = "rmpnav-map";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DumpError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported map dump version {0} (expected {VERSION})")]
    Version(u32),
    #[error("invalid map: {0}")]
    Map(String),
}

pub fn write_dump(map: &OccupancyOctree) -> String {
    let bounds = map.bounds();
    let g = map.grid_min();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "min_cell_size {}", map.min_cell_size());
    let _ = writeln!(
        out,
        "bounds {} {} {} {} {} {}",
        bounds.min.x, bounds.min.y, bounds.min.z, bounds.max.x, bounds.max.y, bounds.max.z
    );
    let _ = writeln!(out, "num_levels {}", map.num_levels());
    let _ = writeln!(out, "unknown_as_occupied {}", map.unknown_as_occupied());
    let cells = map.occupied_cells();
    let _ = writeln!(out, "occupied {}", cells.len());
    for c in cells {
        let _ = writeln!(out, "{} {} {}", c[0] - g[0], c[1] - g[1], c[2] - g[2]);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str), DumpError> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Ok((i + 1, line));
            }
        }
        Err(DumpError::Parse {
            line: self.last + 1,
            message: "unexpected end of file".into(),
        })
    }

    fn field(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), DumpError> {
        let (line, text) = self.next_line()?;
        let mut parts = text.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok((line, parts.collect())),
            other => Err(DumpError::Parse {
                line,
                message: format!("expected `{key}`, found `{}`", other.unwrap_or("")),
            }),
        }
    }
}

fn parse<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T, DumpError> {
    s.parse().map_err(|_| DumpError::Parse {
        line,
        message: format!("invalid {what} `{s}`"),
    })
}

fn arity<'a>(line: usize, key: &str, values: Vec<&'a str>, n: usize) -> Result<Vec<&'a str>, DumpError> {
    if values.len() != n {
        return Err(DumpError::Parse {
            line,
            message: format!("`{key}` takes {n} value(s), found {}", values.len()),
        });
    }
    Ok(values)
}

pub fn read_dump(text: &str) -> Result<OccupancyOctree, DumpError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (line, header) = lines.field(MAGIC)?;
    let version: u32 = parse(line, "version", arity(line, MAGIC, header, 1)?[0])?;
    if version != VERSION {
        return Err(DumpError::Version(version));
    }
    let (line, v) = lines.field("min_cell_size")?;
    let min_cell_size: f64 = parse(line, "min_cell_size", arity(line, "min_cell_size", v, 1)?[0])?;
    let (line, v) = lines.field("bounds")?;
    let b = arity(line, "bounds", v, 6)?
        .into_iter()
        .map(|s| parse::<f64>(line, "bound", s))
        .collect::<Result<Vec<_>, _>>()?;
    let (line, v) = lines.field("num_levels")?;
    let num_levels: u8 = parse(line, "num_levels", arity(line, "num_levels", v, 1)?[0])?;
    let (line, v) = lines.field("unknown_as_occupied")?;
    let unknown_as_occupied: bool = parse(line, "flag", arity(line, "unknown_as_occupied", v, 1)?[0])?;
    let (line, v) = lines.field("occupied")?;
    let count: usize = parse(line, "count", arity(line, "occupied", v, 1)?[0])?;

    let bounds = Aabb::from_arrays([b[0], b[1], b[2]], [b[3], b[4], b[5]]);
    let config = OctreeConfig {
        num_levels,
        unknown_as_occupied,
    };
    let mut builder = OctreeBuilder::new(bounds, min_cell_size, config).map_err(|e| DumpError::Map(e.to_string()))?;
    let g = builder.grid_min();
    for _ in 0..count {
        let (line, text) = lines.next_line()?;
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(DumpError::Parse {
                line,
                message: format!("expected 3 cell indices, found {}", parts.len()),
            });
        }
        let mut index = [0u32; 3];
        for a in 0..3 {
            let rel: u32 = parse(line, "cell index", parts[a])?;
            index[a] = g[a].checked_add(rel).ok_or_else(|| DumpError::Parse {
                line,
                message: format!("cell index {rel} out of range"),
            })?;
        }
        builder.insert_cell(index).map_err(|e| DumpError::Parse {
            line,
            message: e.to_string(),
        })?;
    }
    if let Ok((line, _)) = lines.next_line() {
        return Err(DumpError::Parse {
            line,
            message: format!("more than {count} cells listed"),
        });
    }
    Ok(builder.build())
}
