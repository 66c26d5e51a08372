//! Mesh JSON format: `{"vertices": [[x, y], ...], "cells": [[i0, i1, ...], ...]}`
//! with counter-clockwise loops. Faces and geometry are derived on load and
//! never stored; serde_json emits shortest round-trip decimals, so a
//! save/load cycle reproduces every coordinate bit-exactly.

use crate::{io_err, HarnessError, Result};
use mfd_wave::PolyMesh;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
}

pub fn save_mesh(mesh: &PolyMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = MeshFile {
        vertices: mesh.vertices().to_vec(),
        cells: mesh.cell_loops().to_vec(),
    };
    let body = serde_json::to_string(&file).expect("mesh serialization cannot fail");
    fs::write(path, body).map_err(io_err(path))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<PolyMesh> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(io_err(path))?;
    let file: MeshFile =
        serde_json::from_str(&body).map_err(|source| HarnessError::MeshFormat {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(PolyMesh::from_cells(file.vertices, file.cells)?)
}
