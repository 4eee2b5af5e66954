use super::{DistanceKind, Instance};
use crate::{Error, Result};

/// Split a TSPLIB header line into key and value at the first ':'.
fn header_kv(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once(':')?;
    Some((k.trim().to_uppercase(), v.trim().to_string()))
}

fn map_weight_type(value: &str, line_no: usize) -> Result<DistanceKind> {
    match value {
        "EUC_2D" => Ok(DistanceKind::Euc2dRounded),
        "CEIL_2D" => Ok(DistanceKind::Ceil2d),
        other => Err(Error::Unsupported(format!(
            "EDGE_WEIGHT_TYPE {other} (line {line_no}); only EUC_2D and CEIL_2D are supported"
        ))),
    }
}

fn parse_coord_line(line: &str, line_no: usize) -> Result<(usize, f64, f64)> {
    let mut parts = line.split_whitespace();
    let parse_err = |msg: &str| Error::Parse { line: line_no, msg: msg.to_string() };
    let id: usize = parts
        .next()
        .ok_or_else(|| parse_err("empty coordinate line"))?
        .parse()
        .map_err(|_| parse_err("node id is not an integer"))?;
    let x: f64 = parts
        .next()
        .ok_or_else(|| parse_err("missing x coordinate"))?
        .parse()
        .map_err(|_| parse_err("x coordinate is not a number"))?;
    let y: f64 = parts
        .next()
        .ok_or_else(|| parse_err("missing y coordinate"))?
        .parse()
        .map_err(|_| parse_err("y coordinate is not a number"))?;
    Ok((id, x, y))
}

/// Parse TSPLIB95 text (NODE_COORD_SECTION, EUC_2D or CEIL_2D weights).
pub fn parse_tsplib(text: &str) -> Result<Instance> {
    let mut name = String::from("unnamed");
    let mut dimension: Option<usize> = None;
    let mut distance_kind: Option<DistanceKind> = None;
    let mut coords: Vec<Option<(f64, f64)>> = Vec::new();
    let mut in_coords = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let upper = line.to_uppercase();
        if upper == "EOF" {
            break;
        }
        if upper.starts_with("NODE_COORD_SECTION") {
            let dim = dimension.ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "NODE_COORD_SECTION before DIMENSION".into(),
            })?;
            coords = vec![None; dim];
            in_coords = true;
            continue;
        }
        if in_coords {
            // a header keyword ends the section
            if line.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                in_coords = false;
            } else {
                let (id, x, y) = parse_coord_line(line, line_no)?;
                if id == 0 || id > coords.len() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("node id {id} outside 1..={}", coords.len()),
                    });
                }
                coords[id - 1] = Some((x, y));
                continue;
            }
        }
        if let Some((key, value)) = header_kv(line) {
            match key.as_str() {
                "NAME" => name = value,
                "DIMENSION" => {
                    dimension = Some(value.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: "DIMENSION is not an integer".into(),
                    })?)
                }
                "EDGE_WEIGHT_TYPE" => distance_kind = Some(map_weight_type(&value, line_no)?),
                "TYPE" => {
                    if value.to_uppercase() != "TSP" {
                        return Err(Error::Unsupported(format!(
                            "TYPE {value}; parse_tsplib handles TSP files only"
                        )));
                    }
                }
                _ => {}
            }
        }
    }

    let distance_kind =
        distance_kind.ok_or_else(|| Error::Parse { line: 0, msg: "missing EDGE_WEIGHT_TYPE".into() })?;
    let dim = dimension.ok_or_else(|| Error::Parse { line: 0, msg: "missing DIMENSION".into() })?;
    let mut out = Vec::with_capacity(dim);
    for (i, c) in coords.into_iter().enumerate() {
        out.push(c.ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("node {} has no coordinates", i + 1),
        })?);
    }
    if out.len() != dim {
        return Err(Error::Parse { line: 0, msg: "missing NODE_COORD_SECTION".into() });
    }
    Instance::new_tsp(name, out, distance_kind)
}

/// Parse CVRPLIB text. The depot from DEPOT_SECTION is relabeled to index 0.
pub fn parse_cvrplib(text: &str) -> Result<Instance> {
    let mut name = String::from("unnamed");
    let mut dimension: Option<usize> = None;
    let mut capacity: Option<u32> = None;
    let mut distance_kind = DistanceKind::Euc2dRounded;
    let mut coords: Vec<Option<(f64, f64)>> = Vec::new();
    let mut demands: Vec<Option<u32>> = Vec::new();
    let mut depot: Option<usize> = None;

    #[derive(PartialEq)]
    enum Section {
        None,
        Coords,
        Demands,
        Depot,
    }
    let mut section = Section::None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let upper = line.to_uppercase();
        if upper == "EOF" {
            break;
        }
        let dim_or_err = |dimension: Option<usize>| {
            dimension.ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "section before DIMENSION".into(),
            })
        };
        if upper.starts_with("NODE_COORD_SECTION") {
            coords = vec![None; dim_or_err(dimension)?];
            section = Section::Coords;
            continue;
        }
        if upper.starts_with("DEMAND_SECTION") {
            demands = vec![None; dim_or_err(dimension)?];
            section = Section::Demands;
            continue;
        }
        if upper.starts_with("DEPOT_SECTION") {
            section = Section::Depot;
            continue;
        }
        match section {
            Section::Coords if !line.chars().next().unwrap().is_ascii_alphabetic() => {
                let (id, x, y) = parse_coord_line(line, line_no)?;
                if id == 0 || id > coords.len() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("node id {id} outside 1..={}", coords.len()),
                    });
                }
                coords[id - 1] = Some((x, y));
                continue;
            }
            Section::Demands if !line.chars().next().unwrap().is_ascii_alphabetic() => {
                let mut parts = line.split_whitespace();
                let id: usize = parts
                    .next()
                    .unwrap()
                    .parse()
                    .map_err(|_| Error::Parse { line: line_no, msg: "bad node id".into() })?;
                let d: u32 = parts
                    .next()
                    .ok_or_else(|| Error::Parse { line: line_no, msg: "missing demand".into() })?
                    .parse()
                    .map_err(|_| Error::Parse { line: line_no, msg: "bad demand".into() })?;
                if id == 0 || id > demands.len() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("node id {id} outside 1..={}", demands.len()),
                    });
                }
                demands[id - 1] = Some(d);
                continue;
            }
            Section::Depot => {
                if let Ok(v) = line.parse::<i64>() {
                    if v == -1 {
                        section = Section::None;
                    } else if depot.is_none() {
                        depot = Some(v as usize);
                    } else {
                        return Err(Error::Unsupported("multiple depots".into()));
                    }
                    continue;
                }
                section = Section::None;
            }
            _ => {}
        }
        if let Some((key, value)) = header_kv(line) {
            match key.as_str() {
                "NAME" => name = value,
                "DIMENSION" => {
                    dimension = Some(value.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: "DIMENSION is not an integer".into(),
                    })?)
                }
                "CAPACITY" => {
                    capacity = Some(value.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: "CAPACITY is not an integer".into(),
                    })?)
                }
                "EDGE_WEIGHT_TYPE" => distance_kind = map_weight_type(&value, line_no)?,
                _ => {}
            }
        }
    }

    let capacity = capacity.ok_or_else(|| Error::Parse { line: 0, msg: "missing CAPACITY".into() })?;
    let dim = dimension.ok_or_else(|| Error::Parse { line: 0, msg: "missing DIMENSION".into() })?;
    if coords.is_empty() {
        return Err(Error::Parse { line: 0, msg: "missing NODE_COORD_SECTION".into() });
    }
    if demands.is_empty() {
        return Err(Error::Parse { line: 0, msg: "missing DEMAND_SECTION".into() });
    }
    let depot = depot.ok_or_else(|| Error::Parse { line: 0, msg: "missing DEPOT_SECTION".into() })?;
    if depot == 0 || depot > dim {
        return Err(Error::Parse { line: 0, msg: format!("depot id {depot} outside 1..={dim}") });
    }

    let mut full_coords = Vec::with_capacity(dim);
    let mut full_demands = Vec::with_capacity(dim);
    for i in 0..dim {
        full_coords.push(coords[i].ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("node {} has no coordinates", i + 1),
        })?);
        full_demands.push(demands[i].ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("node {} has no demand", i + 1),
        })?);
    }

    let depot_idx = depot - 1;
    if full_demands[depot_idx] != 0 {
        return Err(Error::validation(format!(
            "depot demand must be 0, got {}",
            full_demands[depot_idx]
        )));
    }

    // relabel so the depot is node 0; customers keep their relative order
    let mut order: Vec<usize> = vec![depot_idx];
    order.extend((0..dim).filter(|&i| i != depot_idx));
    let coords: Vec<(f64, f64)> = order.iter().map(|&i| full_coords[i]).collect();
    let demands: Vec<u32> = order.iter().map(|&i| full_demands[i]).collect();

    Instance::new_cvrp(name, coords, demands, capacity, distance_kind)
}
