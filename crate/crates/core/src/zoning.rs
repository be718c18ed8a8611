//! Weather zones: Voronoi cells of station locations clipped to the service
//! boundary, point-to-zone assignment, and the outage density grid.
//!
//! Geometry runs on a local equirectangular projection about the boundary
//! centroid; polygons are stored back in `[longitude, latitude]`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::geometry::{Point, Polygon, Projection};
use crate::hazard::HazardClass;
use crate::ingest::Station;

/// Distance differences below this are ties, resolved by zone order.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ZoningError {
    #[error("no station supports the {0} hazard class")]
    NoStations(HazardClass),
    #[error("stations '{0}' and '{1}' share coordinates")]
    CoincidentStations(String, String),
    #[error("station '{0}' lies outside the service boundary")]
    StationOutsideBoundary(String),
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("invalid density grid: {0}")]
    InvalidGrid(String),
    #[error("malformed zone GeoJSON: {0}")]
    GeoJson(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherZone {
    /// `<class>:<index>`, e.g. `wind:0`.
    pub zone_id: String,
    pub station_id: String,
    pub station: Point,
    pub polygon: Polygon,
    pub hazard_class: HazardClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePartition {
    pub hazard_class: HazardClass,
    pub zones: Vec<WeatherZone>,
    pub boundary: Polygon,
    pub projection: Projection,
}

/// Result of locating a point; `outside_boundary` flags points that were
/// assigned to their nearest station although they fall outside the territory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneAssignment {
    pub index: usize,
    pub outside_boundary: bool,
}

pub fn zone_id(class: HazardClass, index: usize) -> String {
    format!("{}:{index}", class.as_str())
}

/// Builds the partition for one hazard class by successive half-plane
/// clipping of the boundary (O(n²) in the station count).
pub fn build_partition(
    stations: &[Station],
    class: HazardClass,
    boundary: &Polygon,
) -> Result<ZonePartition, ZoningError> {
    if !boundary.is_simple() {
        return Err(ZoningError::InvalidBoundary(
            "boundary ring is not a simple polygon".into(),
        ));
    }
    let capable: Vec<&Station> = stations.iter().filter(|s| s.supports(class)).collect();
    if capable.is_empty() {
        return Err(ZoningError::NoStations(class));
    }
    for (i, a) in capable.iter().enumerate() {
        for b in &capable[i + 1..] {
            if a.lon_lat() == b.lon_lat() {
                return Err(ZoningError::CoincidentStations(
                    a.station_id.clone(),
                    b.station_id.clone(),
                ));
            }
        }
        if !boundary.contains(a.lon_lat()) {
            return Err(ZoningError::StationOutsideBoundary(a.station_id.clone()));
        }
    }

    let projection = Projection::about(boundary.centroid());
    let sites: Vec<Point> = capable.iter().map(|s| projection.forward(s.lon_lat())).collect();
    let projected_boundary = boundary.map(|p| projection.forward(p));

    let zones = capable
        .iter()
        .enumerate()
        .map(|(i, station)| {
            let cell = voronoi_cell(&projected_boundary, &sites, i);
            WeatherZone {
                zone_id: zone_id(class, i),
                station_id: station.station_id.clone(),
                station: station.lon_lat(),
                polygon: cell.map(|q| projection.inverse(q)),
                hazard_class: class,
            }
        })
        .collect();

    Ok(ZonePartition {
        hazard_class: class,
        zones,
        boundary: boundary.clone(),
        projection,
    })
}

fn voronoi_cell(boundary: &Polygon, sites: &[Point], i: usize) -> Polygon {
    let s = sites[i];
    let mut cell = boundary.clone();
    for (j, t) in sites.iter().enumerate() {
        if j == i {
            continue;
        }
        // keep {p : |p - s| <= |p - t|}  <=>  (t - s)·p <= (t - s)·(s + t)/2
        let normal = [t[0] - s[0], t[1] - s[1]];
        let mid = [(s[0] + t[0]) / 2.0, (s[1] + t[1]) / 2.0];
        let offset = normal[0] * mid[0] + normal[1] * mid[1];
        cell = cell.clip_half_plane(normal, offset);
        if cell.is_empty() {
            break;
        }
    }
    cell
}

/// Nearest-station assignment; ties go to the lowest zone index.
pub fn assign_zone(partition: &ZonePartition, point: Point) -> ZoneAssignment {
    let proj = &partition.projection;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, zone) in partition.zones.iter().enumerate() {
        let d = proj.distance(point, zone.station);
        if d < best_d - TIE_TOLERANCE {
            best = i;
            best_d = d;
        }
    }
    ZoneAssignment {
        index: best,
        outside_boundary: !partition.boundary.contains(point),
    }
}

impl ZonePartition {
    pub fn assign(&self, point: Point) -> ZoneAssignment {
        assign_zone(self, point)
    }

    pub fn zone_id_of(&self, point: Point) -> &str {
        &self.zones[self.assign(point).index].zone_id
    }

    pub fn zone(&self, zone_id: &str) -> Option<&WeatherZone> {
        self.zones.iter().find(|z| z.zone_id == zone_id)
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    /// GeoJSON FeatureCollection; the boundary and station coordinates ride
    /// along as foreign members so the partition can be read back.
    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .zones
            .iter()
            .map(|z| {
                json!({
                    "type": "Feature",
                    "properties": {
                        "zone_id": z.zone_id,
                        "station_id": z.station_id,
                        "hazard_class": z.hazard_class,
                        "station_longitude": z.station[0],
                        "station_latitude": z.station[1],
                    },
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [z.polygon.closed_ring()],
                    }
                })
            })
            .collect();
        json!({
            "type": "FeatureCollection",
            "hazard_class": self.hazard_class,
            "boundary": [self.boundary.closed_ring()],
            "features": features,
        })
    }

    pub fn from_geojson(doc: &Value) -> Result<Self, ZoningError> {
        let bad = |m: &str| ZoningError::GeoJson(m.to_string());
        let hazard_class: HazardClass = serde_json::from_value(
            doc.get("hazard_class").cloned().ok_or_else(|| bad("missing hazard_class"))?,
        )
        .map_err(|e| bad(&e.to_string()))?;
        let boundary = doc
            .get("boundary")
            .and_then(|b| b.get(0))
            .ok_or_else(|| bad("missing boundary"))
            .and_then(|r| parse_ring(r).ok_or_else(|| bad("bad boundary ring")))?;
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing features"))?;
        let mut zones = Vec::with_capacity(features.len());
        for f in features {
            let props = f.get("properties").ok_or_else(|| bad("feature without properties"))?;
            let text = |k: &str| {
                props
                    .get(k)
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| bad(&format!("missing property {k}")))
            };
            let num = |k: &str| {
                props
                    .get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| bad(&format!("missing property {k}")))
            };
            let polygon = f
                .pointer("/geometry/coordinates/0")
                .and_then(parse_ring)
                .ok_or_else(|| bad("bad zone polygon"))?;
            zones.push(WeatherZone {
                zone_id: text("zone_id")?,
                station_id: text("station_id")?,
                station: [num("station_longitude")?, num("station_latitude")?],
                polygon,
                hazard_class,
            });
        }
        Ok(ZonePartition {
            hazard_class,
            zones,
            projection: Projection::about(boundary.centroid()),
            boundary,
        })
    }
}

fn parse_ring(v: &Value) -> Option<Polygon> {
    let pts: Option<Vec<Point>> = v
        .as_array()?
        .iter()
        .map(|p| Some([p.get(0)?.as_f64()?, p.get(1)?.as_f64()?]))
        .collect();
    let poly = Polygon::new(pts?);
    (poly.vertices().len() >= 3).then_some(poly)
}

/// Reads a service boundary from GeoJSON: a Polygon geometry, a Feature, or
/// the first polygon Feature of a FeatureCollection. Only the outer ring is used.
pub fn boundary_from_geojson(text: &str) -> Result<Polygon, ZoningError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| ZoningError::InvalidBoundary(e.to_string()))?;
    let geometry = match doc.get("type").and_then(Value::as_str) {
        Some("Polygon") => Some(&doc),
        Some("Feature") => doc.get("geometry"),
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .and_then(|fs| {
                fs.iter().find_map(|f| {
                    f.get("geometry")
                        .filter(|g| g.get("type").and_then(Value::as_str) == Some("Polygon"))
                })
            }),
        _ => None,
    }
    .ok_or_else(|| ZoningError::InvalidBoundary("no Polygon geometry found".into()))?;
    geometry
        .pointer("/coordinates/0")
        .and_then(parse_ring)
        .ok_or_else(|| ZoningError::InvalidBoundary("polygon ring has fewer than 3 vertices".into()))
}

pub fn boundary_to_geojson(boundary: &Polygon) -> Value {
    json!({
        "type": "Feature",
        "properties": { "name": "service_boundary" },
        "geometry": { "type": "Polygon", "coordinates": [boundary.closed_ring()] }
    })
}

/// Outage counts on a regular lon/lat grid. Row 0 is the southernmost row;
/// `counts` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub bbox: [f64; 4],
    pub cell_size: f64,
    pub nrows: usize,
    pub ncols: usize,
    pub counts: Vec<u64>,
}

impl DensityGrid {
    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.ncols + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.counts.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn sidecar(&self) -> Value {
        json!({
            "bbox": self.bbox,
            "cell_size": self.cell_size,
            "nrows": self.nrows,
            "ncols": self.ncols,
            "row_order": "south_to_north",
        })
    }
}

/// Bins points into half-open cells; a point on a shared edge belongs to the
/// cell with the larger index. Points on the bbox's north/east edge land in
/// the last row/column; points outside the bbox are ignored.
pub fn density_grid(
    points: &[Point],
    bbox: [f64; 4],
    cell_size: f64,
) -> Result<DensityGrid, ZoningError> {
    let [min_x, min_y, max_x, max_y] = bbox;
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(ZoningError::InvalidGrid(format!("cell_size {cell_size} must be > 0")));
    }
    if !(min_x < max_x && min_y < max_y) {
        return Err(ZoningError::InvalidGrid("bbox is not well ordered".into()));
    }
    let ncols = (((max_x - min_x) / cell_size).ceil() as usize).max(1);
    let nrows = (((max_y - min_y) / cell_size).ceil() as usize).max(1);
    let mut counts = vec![0u64; nrows * ncols];
    for p in points {
        if !(p[0] >= min_x && p[0] <= max_x && p[1] >= min_y && p[1] <= max_y) {
            continue;
        }
        let col = (((p[0] - min_x) / cell_size).floor() as usize).min(ncols - 1);
        let row = (((p[1] - min_y) / cell_size).floor() as usize).min(nrows - 1);
        counts[row * ncols + col] += 1;
    }
    Ok(DensityGrid {
        bbox,
        cell_size,
        nrows,
        ncols,
        counts,
    })
}
