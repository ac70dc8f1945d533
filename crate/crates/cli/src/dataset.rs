//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.toml      subject list and ear-canal directions (degrees)
//! <root>/anthro.csv         subject_id + measurement columns (meters)
//! <root>/<id>/hrir.toml     HRIR archive header
//! <root>/<id>/hrir.f32      HRIR samples
//! <root>/<id>/head.mesh     head mesh ("v x y z" / "f i j k")
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sphrtf::geometry::anthro::{parse_anthro_csv, write_anthro_csv};
use sphrtf::geometry::{load_mesh, AnthroRecord, Side};
use sphrtf::hrtf::HrirArchive;
use sphrtf::pipeline::SubjectSource;
use sphrtf::sphere::Direction;

pub const MANIFEST: &str = "manifest.toml";
pub const ANTHRO: &str = "anthro.csv";
pub const HRIR: &str = "hrir.toml";
pub const MESH: &str = "head.mesh";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: String,
    /// `[azimuth, elevation]` of each ear-canal entrance, head-centered.
    pub left_ear_deg: [f64; 2],
    pub right_ear_deg: [f64; 2],
}

impl SubjectEntry {
    pub fn ears(&self) -> Result<[Direction; 2]> {
        let d = |a: [f64; 2]| Direction::from_degrees(a[0], a[1]).map_err(|e| anyhow!("subject {}: {e}", self.id));
        Ok([d(self.left_ear_deg)?, d(self.right_ear_deg)?])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub anthro: HashMap<String, AnthroRecord>,
}

fn ear_deg(d: &Direction) -> [f64; 2] {
    [d.azimuth().to_degrees(), d.elevation().to_degrees()]
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let mp = root.join(MANIFEST);
        let text = std::fs::read_to_string(&mp).with_context(|| format!("reading {}", mp.display()))?;
        let manifest: Manifest = toml::from_str(&text).with_context(|| format!("parsing {}", mp.display()))?;
        if manifest.subjects.is_empty() {
            bail!("{} lists no subjects", mp.display());
        }
        let mut seen = std::collections::HashSet::new();
        for s in &manifest.subjects {
            if !seen.insert(&s.id) || s.id.is_empty() || s.id.contains(['/', '\\']) {
                bail!("{}: subject id '{}' is empty, repeated or not a plain name", mp.display(), s.id);
            }
        }
        let ap = root.join(ANTHRO);
        let text = std::fs::read_to_string(&ap).with_context(|| format!("reading {}", ap.display()))?;
        let anthro = parse_anthro_csv(&text)
            .with_context(|| format!("parsing {}", ap.display()))?
            .into_iter()
            .map(|r| (r.subject_id.clone(), r))
            .collect();
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            anthro,
        })
    }

    pub fn ids(&self) -> Vec<String> {
        self.manifest.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn subject_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn entry(&self, id: &str) -> Result<&SubjectEntry> {
        self.manifest.subjects.iter().find(|s| s.id == id).ok_or_else(|| anyhow!("unknown subject {id}"))
    }

    pub fn anthro(&self, id: &str) -> Result<&AnthroRecord> {
        self.anthro.get(id).ok_or_else(|| anyhow!("subject {id} has no row in {ANTHRO}"))
    }

    /// Input files whose contents determine a subject's prepared outputs.
    pub fn input_files(&self, id: &str) -> Vec<PathBuf> {
        let d = self.subject_dir(id);
        vec![d.join(HRIR), d.join("hrir.f32"), d.join(MESH)]
    }

    pub fn load_archive(&self, id: &str) -> Result<HrirArchive> {
        let p = self.subject_dir(id).join(HRIR);
        let a = HrirArchive::load(&p).with_context(|| format!("subject {id}"))?;
        if a.subject_id() != id {
            bail!("{} belongs to subject {}, expected {id}", p.display(), a.subject_id());
        }
        Ok(a)
    }

    pub fn load_source(&self, id: &str) -> Result<SubjectSource> {
        let entry = self.entry(id)?;
        let mesh_path = self.subject_dir(id).join(MESH);
        Ok(SubjectSource {
            archive: self.load_archive(id)?,
            mesh: load_mesh(&mesh_path).with_context(|| format!("subject {id}: {}", mesh_path.display()))?,
            anthro: self.anthro(id)?.clone(),
            ears: entry.ears()?,
        })
    }

    /// Writes a complete dataset; subjects keep the given order.
    pub fn write(root: &Path, subjects: &[SubjectSource]) -> Result<()> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let mut manifest = Manifest::default();
        let mut records = Vec::new();
        for s in subjects {
            let id = s.archive.subject_id().to_string();
            let dir = root.join(&id);
            s.archive.save(&dir)?;
            s.mesh.save(&dir.join(MESH))?;
            manifest.subjects.push(SubjectEntry {
                id,
                left_ear_deg: ear_deg(&s.ears[Side::Left.index()]),
                right_ear_deg: ear_deg(&s.ears[Side::Right.index()]),
            });
            records.push(s.anthro.clone());
        }
        let mp = root.join(MANIFEST);
        std::fs::write(&mp, toml::to_string(&manifest)?).with_context(|| format!("writing {}", mp.display()))?;
        let ap = root.join(ANTHRO);
        std::fs::write(&ap, write_anthro_csv(&records)?).with_context(|| format!("writing {}", ap.display()))?;
        Ok(())
    }
}
