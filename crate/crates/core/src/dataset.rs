//! Plain-text dataset files and the manifest that ties them together.
//!
//! Every file is whitespace separated, one record per line; blank lines and
//! lines starting with `#` are skipped. Floats are written with Rust's
//! shortest round-trip formatting, so save followed by load is bit-exact.
//!
//! * anchors / ground truth: `id qw qx qy qz tx ty tz` (world→camera)
//! * intrinsics: `id fx fy cx cy` (pixels)
//! * neighbors: `query_id anchor_id score`
//! * matches: one file `{query}__{anchor}.txt` per neighbor pair, lines
//!   `query_kp_id u_q v_q u_a v_a` (pixels)

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::averaging::AnchorId;
use crate::error::{Error, Result};
use crate::geometry::{NormalizedFeature, Pose, UnitQuaternion, Vec3};
use crate::localize::KeypointMatch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub anchors: PathBuf,
    pub intrinsics: PathBuf,
    pub neighbors: PathBuf,
    pub matches: PathBuf,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
}

impl DatasetManifest {
    /// Reads a TOML manifest. Relative paths are taken relative to the
    /// manifest's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest =
            toml::from_str(&text).map_err(|e| Error::parse(path, 0, e.message().to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut m.anchors, &mut m.intrinsics, &mut m.neighbors, &mut m.matches] {
            *p = base.join(&*p);
        }
        m.ground_truth = m.ground_truth.map(|g| base.join(g));
        Ok(m)
    }

    /// The conventional layout inside one directory.
    pub fn in_dir(dir: &Path, with_ground_truth: bool) -> Self {
        DatasetManifest {
            anchors: dir.join("anchors.txt"),
            intrinsics: dir.join("intrinsics.txt"),
            neighbors: dir.join("neighbors.txt"),
            matches: dir.join("matches"),
            ground_truth: with_ground_truth.then(|| dir.join("ground_truth.txt")),
        }
    }
}

/// A pose exactly as written in a file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseRecord {
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

impl PoseRecord {
    pub fn from_pose(pose: &Pose) -> Self {
        PoseRecord {
            quaternion: pose.rotation.to_quaternion().components(),
            translation: pose.translation.into(),
        }
    }

    pub fn to_pose(&self) -> Result<Pose> {
        let [w, x, y, z] = self.quaternion;
        let q = UnitQuaternion::new(w, x, y, z)?;
        Ok(Pose::new(q.to_rotation(), Vec3::from(self.translation)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("focal lengths must be positive and all values finite".into()));
        }
        Ok(Intrinsics { fx, fy, cx, cy })
    }

    pub fn normalize(&self, u: f64, v: f64) -> Result<NormalizedFeature> {
        NormalizedFeature::new((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    pub fn to_pixels(&self, f: &NormalizedFeature) -> (f64, f64) {
        (self.fx * f.x() + self.cx, self.fy * f.y() + self.cy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelMatch {
    pub query_kp: u64,
    pub query: (f64, f64),
    pub anchor: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub anchor_id: AnchorId,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub anchors: BTreeMap<AnchorId, PoseRecord>,
    pub intrinsics: BTreeMap<String, Intrinsics>,
    /// Per query, best score first.
    pub neighbors: BTreeMap<String, Vec<Neighbor>>,
    pub matches: BTreeMap<(String, AnchorId), Vec<PixelMatch>>,
    pub ground_truth: Option<BTreeMap<String, PoseRecord>>,
}

pub fn match_file_name(query: &str, anchor: &AnchorId) -> String {
    format!("{query}__{}.txt", anchor.0)
}

struct Lines<'a> {
    path: &'a Path,
}

impl Lines<'_> {
    fn read(&self) -> Result<Vec<(usize, Vec<String>)>> {
        let text = fs::read_to_string(self.path)
            .map_err(|e| Error::parse(self.path, 0, format!("cannot read file: {e}")))?;
        Ok(text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .map(|(i, l)| (i, l.split_whitespace().map(str::to_string).collect()))
            .collect())
    }

    fn fields<'f>(&self, line: usize, f: &'f [String], n: usize) -> Result<&'f [String]> {
        if f.len() != n {
            return Err(Error::parse(self.path, line, format!("expected {n} fields, found {}", f.len())));
        }
        Ok(f)
    }

    fn float(&self, line: usize, s: &str) -> Result<f64> {
        let v: f64 = s
            .parse()
            .map_err(|_| Error::parse(self.path, line, format!("not a number: {s:?}")))?;
        if !v.is_finite() {
            return Err(Error::parse(self.path, line, format!("non-finite value {s:?}")));
        }
        Ok(v)
    }

    fn floats<const N: usize>(&self, line: usize, f: &[String]) -> Result<[f64; N]> {
        let mut out = [0.0; N];
        for (o, s) in out.iter_mut().zip(f) {
            *o = self.float(line, s)?;
        }
        Ok(out)
    }

    fn wrap<T>(&self, line: usize, r: Result<T>) -> Result<T> {
        r.map_err(|e| Error::parse(self.path, line, e.to_string()))
    }
}

fn check_id(lines: &Lines, line: usize, id: &str) -> Result<()> {
    if id.contains(',') || id.contains("__") || id.contains('/') {
        return Err(Error::parse(
            lines.path,
            line,
            format!("id {id:?} may not contain ',', '/' or '__'"),
        ));
    }
    Ok(())
}

pub fn read_poses(path: &Path) -> Result<BTreeMap<String, PoseRecord>> {
    let lines = Lines { path };
    let mut out = BTreeMap::new();
    for (n, f) in lines.read()? {
        let f = lines.fields(n, &f, 8)?;
        check_id(&lines, n, &f[0])?;
        let v: [f64; 7] = lines.floats(n, &f[1..])?;
        let rec = PoseRecord {
            quaternion: [v[0], v[1], v[2], v[3]],
            translation: [v[4], v[5], v[6]],
        };
        lines.wrap(n, rec.to_pose())?;
        if out.insert(f[0].clone(), rec).is_some() {
            return Err(Error::parse(path, n, format!("duplicate id {}", f[0])));
        }
    }
    Ok(out)
}

pub fn read_intrinsics(path: &Path) -> Result<BTreeMap<String, Intrinsics>> {
    let lines = Lines { path };
    let mut out = BTreeMap::new();
    for (n, f) in lines.read()? {
        let f = lines.fields(n, &f, 5)?;
        check_id(&lines, n, &f[0])?;
        let [fx, fy, cx, cy] = lines.floats(n, &f[1..])?;
        let k = lines.wrap(n, Intrinsics::new(fx, fy, cx, cy))?;
        if out.insert(f[0].clone(), k).is_some() {
            return Err(Error::parse(path, n, format!("duplicate id {}", f[0])));
        }
    }
    Ok(out)
}

pub fn read_neighbors(path: &Path) -> Result<BTreeMap<String, Vec<(usize, Neighbor)>>> {
    let lines = Lines { path };
    let mut out: BTreeMap<String, Vec<(usize, Neighbor)>> = BTreeMap::new();
    for (n, f) in lines.read()? {
        let f = lines.fields(n, &f, 3)?;
        check_id(&lines, n, &f[0])?;
        let score = lines.float(n, &f[2])?;
        let list = out.entry(f[0].clone()).or_default();
        let anchor_id = AnchorId(f[1].clone());
        if list.iter().any(|(_, nb)| nb.anchor_id == anchor_id) {
            return Err(Error::parse(path, n, format!("anchor {anchor_id} listed twice for {}", f[0])));
        }
        list.push((n, Neighbor { anchor_id, score }));
    }
    Ok(out)
}

pub fn read_matches(path: &Path) -> Result<Vec<PixelMatch>> {
    let lines = Lines { path };
    let mut out = Vec::new();
    for (n, f) in lines.read()? {
        let f = lines.fields(n, &f, 5)?;
        let kp: u64 = f[0]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("keypoint id {:?} is not a non-negative integer", f[0])))?;
        let [uq, vq, ua, va] = lines.floats(n, &f[1..])?;
        out.push(PixelMatch {
            query_kp: kp,
            query: (uq, vq),
            anchor: (ua, va),
        });
    }
    Ok(out)
}

/// Loads and cross-checks every file named by the manifest.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Dataset> {
    let anchors: BTreeMap<AnchorId, PoseRecord> =
        read_poses(&manifest.anchors)?.into_iter().map(|(k, v)| (AnchorId(k), v)).collect();
    let intrinsics = read_intrinsics(&manifest.intrinsics)?;
    let raw_neighbors = read_neighbors(&manifest.neighbors)?;
    let mut neighbors = BTreeMap::new();
    let mut matches = BTreeMap::new();
    for (query, mut list) in raw_neighbors {
        let kq = intrinsics.get(&query).ok_or_else(|| {
            Error::parse(&manifest.intrinsics, 0, format!("no intrinsics for query {query}"))
        })?;
        for (line, nb) in &list {
            if !anchors.contains_key(&nb.anchor_id) {
                return Err(Error::parse(
                    &manifest.neighbors,
                    *line,
                    format!("unknown anchor id {}", nb.anchor_id),
                ));
            }
            let ka = intrinsics.get(&nb.anchor_id.0).ok_or_else(|| {
                Error::parse(&manifest.intrinsics, 0, format!("no intrinsics for anchor {}", nb.anchor_id))
            })?;
            let path = manifest.matches.join(match_file_name(&query, &nb.anchor_id));
            let m = read_matches(&path)?;
            for (i, pm) in m.iter().enumerate() {
                // line numbers are approximate when the file has comments
                let check = kq
                    .normalize(pm.query.0, pm.query.1)
                    .and_then(|_| ka.normalize(pm.anchor.0, pm.anchor.1));
                check.map_err(|e| Error::parse(&path, i + 1, e.to_string()))?;
            }
            matches.insert((query.clone(), nb.anchor_id.clone()), m);
        }
        // stable: equal scores keep file order
        list.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));
        neighbors.insert(query, list.into_iter().map(|(_, nb)| nb).collect());
    }
    let ground_truth = match &manifest.ground_truth {
        Some(p) => Some(read_poses(p)?),
        None => None,
    };
    Ok(Dataset {
        anchors,
        intrinsics,
        neighbors,
        matches,
        ground_truth,
    })
}

fn pose_line(s: &mut String, id: &str, r: &PoseRecord) {
    let [w, x, y, z] = r.quaternion;
    let [tx, ty, tz] = r.translation;
    let _ = writeln!(s, "{id} {w} {x} {y} {z} {tx} {ty} {tz}");
}

pub fn write_poses<'a>(path: &Path, poses: impl IntoIterator<Item = (&'a str, &'a PoseRecord)>) -> Result<()> {
    let mut s = String::from("# id qw qx qy qz tx ty tz\n");
    for (id, r) in poses {
        pose_line(&mut s, id, r);
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

impl Dataset {
    pub fn query_ids(&self) -> Vec<String> {
        self.neighbors.keys().cloned().collect()
    }

    pub fn anchor_pose(&self, id: &AnchorId) -> Result<Pose> {
        self.anchors
            .get(id)
            .ok_or_else(|| Error::Domain(format!("unknown anchor {id}")))?
            .to_pose()
    }

    pub fn ground_truth_pose(&self, query: &str) -> Option<Pose> {
        self.ground_truth.as_ref()?.get(query)?.to_pose().ok()
    }

    /// Matches for one neighbor pair in normalized coordinates.
    pub fn normalized_matches(&self, query: &str, anchor: &AnchorId) -> Result<Vec<KeypointMatch>> {
        let missing = || Error::Domain(format!("no intrinsics for {query} or {anchor}"));
        let kq = self.intrinsics.get(query).ok_or_else(missing)?;
        let ka = self.intrinsics.get(&anchor.0).ok_or_else(missing)?;
        let raw = self
            .matches
            .get(&(query.to_string(), anchor.clone()))
            .ok_or_else(|| Error::Domain(format!("no matches for {query} and {anchor}")))?;
        raw.iter()
            .map(|m| {
                Ok(KeypointMatch {
                    query_kp: m.query_kp,
                    query: kq.normalize(m.query.0, m.query.1)?,
                    anchor: ka.normalize(m.anchor.0, m.anchor.1)?,
                })
            })
            .collect()
    }

    /// Writes the dataset in the conventional layout and returns the manifest
    /// path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let manifest = DatasetManifest::in_dir(dir, self.ground_truth.is_some());
        fs::create_dir_all(&manifest.matches).map_err(|e| Error::io(&manifest.matches, e))?;
        write_poses(&manifest.anchors, self.anchors.iter().map(|(k, v)| (k.0.as_str(), v)))?;

        let mut s = String::from("# id fx fy cx cy\n");
        for (id, k) in &self.intrinsics {
            let _ = writeln!(s, "{id} {} {} {} {}", k.fx, k.fy, k.cx, k.cy);
        }
        fs::write(&manifest.intrinsics, s).map_err(|e| Error::io(&manifest.intrinsics, e))?;

        let mut s = String::from("# query_id anchor_id score\n");
        for (q, list) in &self.neighbors {
            for nb in list {
                let _ = writeln!(s, "{q} {} {}", nb.anchor_id, nb.score);
            }
        }
        fs::write(&manifest.neighbors, s).map_err(|e| Error::io(&manifest.neighbors, e))?;

        for ((q, a), list) in &self.matches {
            let mut s = String::from("# query_kp_id u_q v_q u_a v_a\n");
            for m in list {
                let _ = writeln!(s, "{} {} {} {} {}", m.query_kp, m.query.0, m.query.1, m.anchor.0, m.anchor.1);
            }
            let path = manifest.matches.join(match_file_name(q, a));
            fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        }
        if let (Some(gt), Some(path)) = (&self.ground_truth, &manifest.ground_truth) {
            write_poses(path, gt.iter().map(|(k, v)| (k.as_str(), v)))?;
        }

        let rel = |p: &Path| p.strip_prefix(dir).unwrap_or(p).to_path_buf();
        let on_disk = DatasetManifest {
            anchors: rel(&manifest.anchors),
            intrinsics: rel(&manifest.intrinsics),
            neighbors: rel(&manifest.neighbors),
            matches: rel(&manifest.matches),
            ground_truth: manifest.ground_truth.as_deref().map(rel),
        };
        let path = dir.join("manifest.toml");
        let text = toml::to_string(&on_disk).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
