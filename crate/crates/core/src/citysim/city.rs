//! Planar street networks: grid generation, a line-oriented text format and
//! segment geometry.
//!
//! Text format, one record per line, `#` starts a comment:
//!
//! ```text
//! city <name>
//! street <id> <segments> <x,y> <x,y> [<x,y> ...]
//! device <id> <street id> <segment>
//! ```
//!
//! A street's polyline is split into `segments` pieces of equal arc length.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StreetId = u32;
pub type DeviceId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Street {
    pub id: StreetId,
    pub segments: u32,
    pub polyline: Vec<Point>,
}

impl Street {
    pub fn length(&self) -> f64 {
        self.polyline.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Point at arc-length `s` from the start (clamped to the polyline).
    fn point_at(&self, s: f64) -> Point {
        let mut left = s.max(0.0);
        for w in self.polyline.windows(2) {
            let d = w[0].distance(&w[1]);
            if left <= d {
                return w[0].lerp(&w[1], if d == 0.0 { 0.0 } else { left / d });
            }
            left -= d;
        }
        *self.polyline.last().expect("validated polylines have two points")
    }

    /// Endpoints of segment `seg` (1-based).
    pub fn segment_endpoints(&self, seg: u32) -> (Point, Point) {
        assert!(seg >= 1 && seg <= self.segments, "segment {seg} out of range");
        let step = self.length() / self.segments as f64;
        let a = if seg == 1 {
            self.polyline[0]
        } else {
            self.point_at(step * (seg - 1) as f64)
        };
        let b = if seg == self.segments {
            *self.polyline.last().unwrap()
        } else {
            self.point_at(step * seg as f64)
        };
        (a, b)
    }

    pub fn segment_midpoint(&self, seg: u32) -> Point {
        let (a, b) = self.segment_endpoints(seg);
        a.lerp(&b, 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoadSegment {
    pub street: StreetId,
    pub segment: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevicePlacement {
    pub id: DeviceId,
    pub at: RoadSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityModel {
    pub name: String,
    pub streets: Vec<Street>,
    pub devices: Vec<DevicePlacement>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CityError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("city has no streets")]
    Empty,
    #[error("street {0} has no segments")]
    NoSegments(StreetId),
    #[error("street {0} needs a polyline of positive length")]
    DegenerateStreet(StreetId),
    #[error("duplicate street id {0}")]
    DuplicateStreet(StreetId),
    #[error("duplicate device id {0}")]
    DuplicateDevice(DeviceId),
    #[error("device {device} placed on unknown segment {segment} of street {street}")]
    BadPlacement {
        device: DeviceId,
        street: StreetId,
        segment: u32,
    },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("io: {0}")]
    Io(String),
}

impl CityModel {
    pub fn street(&self, id: StreetId) -> Option<&Street> {
        self.streets.iter().find(|s| s.id == id)
    }

    pub fn segment_count(&self) -> usize {
        self.streets.iter().map(|s| s.segments as usize).sum()
    }

    pub fn road_segments(&self) -> impl Iterator<Item = RoadSegment> + '_ {
        self.streets.iter().flat_map(|s| {
            (1..=s.segments).map(move |segment| RoadSegment {
                street: s.id,
                segment,
            })
        })
    }

    /// Axis-aligned bounding box `(min, max)` of all polylines.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.streets.iter().flat_map(|s| &s.polyline) {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Result<(), CityError> {
        if self.streets.is_empty() {
            return Err(CityError::Empty);
        }
        let mut ids = BTreeSet::new();
        for s in &self.streets {
            if !ids.insert(s.id) {
                return Err(CityError::DuplicateStreet(s.id));
            }
            if s.segments == 0 {
                return Err(CityError::NoSegments(s.id));
            }
            if s.polyline.len() < 2 || !(s.length() > 0.0) {
                return Err(CityError::DegenerateStreet(s.id));
            }
        }
        let mut dev = BTreeSet::new();
        for d in &self.devices {
            if !dev.insert(d.id) {
                return Err(CityError::DuplicateDevice(d.id));
            }
            let ok = self
                .street(d.at.street)
                .is_some_and(|s| d.at.segment >= 1 && d.at.segment <= s.segments);
            if !ok {
                return Err(CityError::BadPlacement {
                    device: d.id,
                    street: d.at.street,
                    segment: d.at.segment,
                });
            }
        }
        Ok(())
    }

    pub fn segment_endpoints(&self, at: RoadSegment) -> Option<(Point, Point)> {
        let s = self.street(at.street)?;
        (at.segment >= 1 && at.segment <= s.segments).then(|| s.segment_endpoints(at.segment))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub blocks_x: u32,
    pub blocks_y: u32,
    pub block_length: f64,
    pub segment_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            blocks_x: 12,
            blocks_y: 12,
            block_length: 200.0,
            segment_length: 25.0,
        }
    }
}

/// Manhattan grid with one street per block edge. A grid of `n×m` blocks has
/// `n(m+1) + m(n+1)` streets, each cut into `block_length / segment_length`
/// segments.
pub fn generate_grid_city(spec: &GridSpec) -> Result<CityModel, CityError> {
    if spec.blocks_x == 0 || spec.blocks_y == 0 {
        return Err(CityError::Grid("needs at least one block per axis".into()));
    }
    if !(spec.block_length > 0.0 && spec.segment_length > 0.0) {
        return Err(CityError::Grid("lengths must be positive".into()));
    }
    let ratio = spec.block_length / spec.segment_length;
    let rho = ratio.round();
    if rho < 1.0 || (ratio - rho).abs() > 1e-9 {
        return Err(CityError::Grid(format!(
            "segment length {} does not divide block length {}",
            spec.segment_length, spec.block_length
        )));
    }
    let b = spec.block_length;
    let mut streets = Vec::new();
    let mut push = |a: Point, z: Point| {
        streets.push(Street {
            id: streets.len() as StreetId + 1,
            segments: rho as u32,
            polyline: vec![a, z],
        })
    };
    for y in 0..=spec.blocks_y {
        for x in 0..spec.blocks_x {
            push(
                Point::new(x as f64 * b, y as f64 * b),
                Point::new((x + 1) as f64 * b, y as f64 * b),
            );
        }
    }
    for x in 0..=spec.blocks_x {
        for y in 0..spec.blocks_y {
            push(
                Point::new(x as f64 * b, y as f64 * b),
                Point::new(x as f64 * b, (y + 1) as f64 * b),
            );
        }
    }
    Ok(CityModel {
        name: format!("grid-{}x{}", spec.blocks_x, spec.blocks_y),
        streets,
        devices: Vec::new(),
    })
}

pub fn parse_city(text: &str) -> Result<CityModel, CityError> {
    let mut name = None;
    let mut streets: Vec<Street> = Vec::new();
    let mut devices = Vec::new();
    let mut seen_streets = BTreeMap::new();
    let mut seen_devices = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| CityError::Parse { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let keyword = fields.next().unwrap();
        let rest: Vec<&str> = fields.collect();
        match keyword {
            "city" => {
                if name.is_some() {
                    return Err(err("second city header".into()));
                }
                if rest.len() != 1 {
                    return Err(err("expected `city <name>`".into()));
                }
                name = Some(rest[0].to_string());
            }
            "street" => {
                if name.is_none() {
                    return Err(err("street before city header".into()));
                }
                if rest.len() < 4 {
                    return Err(err("expected `street <id> <segments> <x,y> <x,y> ...`".into()));
                }
                let id: StreetId = rest[0]
                    .parse()
                    .map_err(|_| err(format!("bad street id {:?}", rest[0])))?;
                let segments: u32 = rest[1]
                    .parse()
                    .map_err(|_| err(format!("bad segment count {:?}", rest[1])))?;
                if segments == 0 {
                    return Err(err(format!("street {id} has zero segments")));
                }
                let polyline = rest[2..]
                    .iter()
                    .map(|c| parse_point(c).ok_or_else(|| err(format!("bad coordinate {c:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some(prev) = seen_streets.insert(id, line) {
                    return Err(err(format!("duplicate street id {id} (first on line {prev})")));
                }
                let street = Street {
                    id,
                    segments,
                    polyline,
                };
                if !(street.length() > 0.0) {
                    return Err(err(format!("street {id} has zero length")));
                }
                streets.push(street);
            }
            "device" => {
                if rest.len() != 3 {
                    return Err(err("expected `device <id> <street> <segment>`".into()));
                }
                let nums = rest
                    .iter()
                    .map(|f| f.parse::<u32>().map_err(|_| err(format!("bad number {f:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if !seen_devices.insert(nums[0]) {
                    return Err(err(format!("duplicate device id {}", nums[0])));
                }
                devices.push((
                    line,
                    DevicePlacement {
                        id: nums[0],
                        at: RoadSegment {
                            street: nums[1],
                            segment: nums[2],
                        },
                    },
                ));
            }
            other => return Err(err(format!("unknown record {other:?}"))),
        }
    }
    let name = name.ok_or(CityError::Parse {
        line: 0,
        message: "missing city header".into(),
    })?;
    let mut city = CityModel {
        name,
        streets,
        devices: Vec::new(),
    };
    for (line, d) in devices {
        let ok = city
            .street(d.at.street)
            .is_some_and(|s| d.at.segment >= 1 && d.at.segment <= s.segments);
        if !ok {
            return Err(CityError::Parse {
                line,
                message: format!(
                    "device {} on unknown segment {} of street {}",
                    d.id, d.at.segment, d.at.street
                ),
            });
        }
        city.devices.push(d);
    }
    city.validate()?;
    Ok(city)
}

fn parse_point(s: &str) -> Option<Point> {
    let (x, y) = s.split_once(',')?;
    let p = Point::new(x.parse().ok()?, y.parse().ok()?);
    (p.x.is_finite() && p.y.is_finite()).then_some(p)
}

pub fn load_city(path: &Path) -> Result<CityModel, CityError> {
    let text = std::fs::read_to_string(path).map_err(|e| CityError::Io(e.to_string()))?;
    parse_city(&text)
}

pub fn write_city(city: &CityModel) -> String {
    let mut out = format!("city {}\n", city.name);
    for s in &city.streets {
        let _ = write!(out, "street {} {}", s.id, s.segments);
        for p in &s.polyline {
            let _ = write!(out, " {},{}", p.x, p.y);
        }
        out.push('\n');
    }
    for d in &city.devices {
        let _ = writeln!(out, "device {} {} {}", d.id, d.at.street, d.at.segment);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(bx: u32, by: u32) -> CityModel {
        generate_grid_city(&GridSpec {
            blocks_x: bx,
            blocks_y: by,
            block_length: 100.0,
            segment_length: 25.0,
        })
        .unwrap()
    }

    #[test]
    fn grid_street_counts() {
        assert_eq!(grid(2, 2).streets.len(), 12);
        assert_eq!(grid(1, 1).streets.len(), 4);
        assert_eq!(grid(3, 1).streets.len(), 3 * 2 + 4);
        let c = grid(2, 2);
        assert!(c.streets.iter().all(|s| s.segments == 4));
        c.validate().unwrap();
    }

    #[test]
    fn segments_partition_the_street() {
        let c = grid(1, 1);
        for s in &c.streets {
            let total: f64 = (1..=s.segments)
                .map(|k| {
                    let (a, b) = s.segment_endpoints(k);
                    a.distance(&b)
                })
                .sum();
            assert!((total - s.length()).abs() < 1e-9);
            for k in 1..s.segments {
                assert_eq!(s.segment_endpoints(k).1, s.segment_endpoints(k + 1).0);
            }
        }
    }

    #[test]
    fn grid_rejects_non_dividing_segment_length() {
        let spec = GridSpec {
            blocks_x: 1,
            blocks_y: 1,
            block_length: 100.0,
            segment_length: 30.0,
        };
        assert!(matches!(generate_grid_city(&spec), Err(CityError::Grid(_))));
    }

    const FIXTURE: &str = "\
# two streets meeting at the origin
city tiny
street 10 7 0,0 70,0
street 11 2 0,0 0,10 0,20   # bent polyline
device 1 10 5
";

    #[test]
    fn parses_fixture_and_round_trips() {
        let c = parse_city(FIXTURE).unwrap();
        assert_eq!(c.name, "tiny");
        assert_eq!(c.streets.len(), 2);
        assert_eq!(c.street(10).unwrap().segments, 7);
        assert_eq!(c.devices.len(), 1);
        let (a, b) = c.street(11).unwrap().segment_endpoints(2);
        assert_eq!((a, b), (Point::new(0.0, 10.0), Point::new(0.0, 20.0)));
        assert_eq!(parse_city(&write_city(&c)).unwrap(), c);
    }

    #[test]
    fn parse_errors_name_lines() {
        let dup = "city x\nstreet 1 2 0,0 1,0\nstreet 1 2 0,0 0,1\n";
        assert!(matches!(parse_city(dup), Err(CityError::Parse { line: 3, .. })));
        let zero = "city x\nstreet 1 0 0,0 1,0\n";
        assert!(matches!(parse_city(zero), Err(CityError::Parse { line: 2, .. })));
        let coord = "city x\nstreet 1 2 0,0 1;0\n";
        assert!(matches!(parse_city(coord), Err(CityError::Parse { line: 2, .. })));
        let device = "city x\nstreet 1 2 0,0 1,0\ndevice 1 1 3\n";
        assert!(matches!(parse_city(device), Err(CityError::Parse { line: 3, .. })));
        assert!(matches!(parse_city("street 1 2 0,0 1,0"), Err(CityError::Parse { line: 1, .. })));
        assert!(matches!(parse_city("city x\n"), Err(CityError::Empty)));
    }
}
