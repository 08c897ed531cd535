//! Synthetic POI datasets: visit histories, ratings and grid placements.
//!
//! Item i sits at Hilbert index i, so an item's index doubles as its
//! location on the curve.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{index_to_xy, order_for, GridCell, HilbertIndex};
use crate::recommender::{build_cm, CoMatrix, InversionList, PreferenceVector, DEFAULT_RATING_MAX};

/// Upper bound on the visits drawn per user.
pub const MAX_VISITS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub pois: usize,
    pub users: usize,
    pub seed: u64,
    pub order: u32,
    pub rating_max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub lists: InversionList,
    /// One per user, in user order.
    pub pvs: Vec<PreferenceVector>,
    /// Grid cell of each item.
    pub placements: Vec<GridCell>,
}

pub fn gen_data(pois: usize, users: usize, seed: u64) -> Result<Dataset> {
    if pois == 0 {
        return Err(Error::Domain("a dataset needs at least one POI".into()));
    }
    let order = order_for(pois as u64);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut lists = InversionList::new();
    let mut pvs = Vec::with_capacity(users);
    for user in 0..users {
        let visits = rng.gen_range(1..=pois.min(MAX_VISITS));
        let mut ratings = vec![0u32; pois];
        let items = sample(&mut rng, pois, visits).into_vec();
        for &item in &items {
            ratings[item] = rng.gen_range(1..=DEFAULT_RATING_MAX);
        }
        lists.extend(user as u64, items);
        pvs.push(PreferenceVector::new(ratings, DEFAULT_RATING_MAX)?);
    }
    let placements = (0..pois as u64)
        .map(|d| Ok(index_to_xy(HilbertIndex::new(order, d)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        meta: DatasetMeta { pois, users, seed, order, rating_max: DEFAULT_RATING_MAX },
        lists,
        pvs,
        placements,
    })
}

impl Dataset {
    /// Each user's own matrix, as uploaded during initialization.
    pub fn contributions(&self) -> Result<Vec<CoMatrix>> {
        self.lists.users().map(|(u, _)| build_cm(&self.lists.single(u), self.meta.pois)).collect()
    }

    /// The aggregate matrix over all users.
    pub fn co_matrix(&self) -> Result<CoMatrix> {
        build_cm(&self.lists, self.meta.pois)
    }

    /// Writes `meta.json`, `inversion.csv`, `pvs.csv`, `pv.csv` (user 0)
    /// and `placements.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&self.meta)?)?;

        let mut w = csv_writer(&dir.join("inversion.csv"))?;
        w.write_record(["user", "item"]).map_err(csv_err)?;
        for (user, items) in self.lists.users() {
            for item in items {
                w.write_record([user.to_string(), item.to_string()]).map_err(csv_err)?;
            }
        }
        w.flush()?;

        let mut w = csv_writer(&dir.join("pvs.csv"))?;
        let mut header = vec!["user".to_string()];
        header.extend((0..self.meta.pois).map(|i| format!("r{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for (user, pv) in self.pvs.iter().enumerate() {
            let mut row = vec![user.to_string()];
            row.extend(pv.ratings().iter().map(u32::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;

        if let Some(pv) = self.pvs.first() {
            write_pv(&dir.join("pv.csv"), pv)?;
        }

        let mut w = csv_writer(&dir.join("placements.csv"))?;
        w.write_record(["item", "x", "y"]).map_err(csv_err)?;
        for (item, cell) in self.placements.iter().enumerate() {
            w.write_record([item.to_string(), cell.x.to_string(), cell.y.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)
            .map_err(|e| Error::Format(format!("meta.json: {e}")))?;
        let lists = read_inversion(&dir.join("inversion.csv"))?;
        let mut pvs = Vec::new();
        for row in csv_rows(&dir.join("pvs.csv"))? {
            let ratings = row.iter().skip(1).map(|v| parse(v)).collect::<Result<Vec<u32>>>()?;
            pvs.push(PreferenceVector::new(ratings, meta.rating_max)?);
        }
        let placements = csv_rows(&dir.join("placements.csv"))?
            .iter()
            .map(|row| match row.as_slice() {
                [_, x, y] => Ok(GridCell::new(parse(x)?, parse(y)?)),
                _ => Err(Error::Format("placements.csv rows need item,x,y".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { meta, lists, pvs, placements })
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

/// Data rows of a headed CSV file.
fn csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.records()
        .map(|rec| Ok(rec.map_err(csv_err)?.iter().map(str::to_string).collect()))
        .collect()
}

/// `user,item` rows.
pub fn read_inversion(path: &Path) -> Result<InversionList> {
    let mut lists = InversionList::new();
    for row in csv_rows(path)? {
        match row.as_slice() {
            [u, i] => lists.insert(parse(u)?, parse(i)?),
            _ => return Err(Error::Format("inversion.csv rows need user,item".into())),
        }
    }
    Ok(lists)
}

/// A preference vector file: a header line, then one line of ratings.
pub fn write_pv(path: &Path, pv: &PreferenceVector) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record((0..pv.len()).map(|i| format!("r{i}"))).map_err(csv_err)?;
    w.write_record(pv.ratings().iter().map(u32::to_string)).map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

pub fn read_pv(path: &Path, rating_max: u32) -> Result<PreferenceVector> {
    let rows = csv_rows(path)?;
    let [row] = rows.as_slice() else {
        return Err(Error::Format(format!("{}: expected exactly one row of ratings", path.display())));
    };
    PreferenceVector::new(row.iter().map(|v| parse(v)).collect::<Result<_>>()?, rating_max)
}

/// A square matrix file: one headed CSV row per matrix row.
pub fn write_matrix(path: &Path, cm: &CoMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record((0..cm.size()).map(|j| format!("c{j}"))).map_err(csv_err)?;
    for i in 0..cm.size() {
        w.write_record((0..cm.size()).map(|j| cm.get(i, j).to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<CoMatrix> {
    let rows = csv_rows(path)?
        .iter()
        .map(|row| row.iter().map(|v| parse(v)).collect::<Result<Vec<u64>>>())
        .collect::<Result<Vec<_>>>()?;
    CoMatrix::from_rows(rows)
}
