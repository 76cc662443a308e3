//! On-disk formats: interaction files, labeled split files, id mappings,
//! model checkpoints and CSV tables. Every writer goes through a temp file
//! that is renamed into place.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use pld_core::dataset::{parse_interactions, IdMapping, InteractionSet, Label, NoisyTrainSet};
use pld_core::model::{Matrix, ModelState};
use serde::Serialize;

/// Writes `path` by streaming into a sibling temp file and renaming it over
/// the target once `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a `user item` per line file (tab or any whitespace separated).
pub fn load_interactions(path: &Path) -> Result<(InteractionSet, IdMapping)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading interaction file {}", path.display()))?;
    parse_interactions(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `raw_id<TAB>dense_index` per line.
pub fn write_id_mapping(path: &Path, names: &[String]) -> Result<()> {
    write_atomic(path, |w| {
        for (i, name) in names.iter().enumerate() {
            writeln!(w, "{name}\t{i}")?;
        }
        Ok(())
    })
}

pub fn read_id_mapping(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut names = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (name, idx) = line.rsplit_once('\t').ok_or_else(|| {
            anyhow!(
                "{}:{}: expected raw_id<TAB>index",
                path.display(),
                lineno + 1
            )
        })?;
        let idx: usize = idx
            .parse()
            .with_context(|| format!("{}:{}: bad index", path.display(), lineno + 1))?;
        if idx != names.len() {
            bail!(
                "{}:{}: indices must be dense and ordered",
                path.display(),
                lineno + 1
            );
        }
        names.push(name.to_string());
    }
    Ok(names)
}

/// `user<TAB>item<TAB>label` in dense indices.
pub fn write_labeled_rows<I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (u32, u32, Label)>,
{
    write_atomic(path, |w| {
        for (u, v, l) in rows {
            writeln!(w, "{u}\t{v}\t{l}")?;
        }
        Ok(())
    })
}

pub fn write_noisy_train(path: &Path, data: &NoisyTrainSet) -> Result<()> {
    write_labeled_rows(path, data.labeled_rows())
}

pub fn write_plain_set(path: &Path, set: &InteractionSet) -> Result<()> {
    write_labeled_rows(path, set.iter().map(|(u, v)| (u, v, Label::Normal)))
}

pub fn read_labeled_rows(path: &Path) -> Result<Vec<(u32, u32, Label)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), lineno + 1);
        let mut f = line.split('\t');
        let (Some(u), Some(v), Some(l), None) = (f.next(), f.next(), f.next(), f.next()) else {
            bail!("{}: expected user<TAB>item<TAB>label", at());
        };
        rows.push((
            u.parse().with_context(at)?,
            v.parse().with_context(at)?,
            l.parse::<Label>().map_err(|e| anyhow!("{}: {e}", at()))?,
        ));
    }
    Ok(rows)
}

pub fn read_noisy_train(path: &Path, num_users: usize, num_items: usize) -> Result<NoisyTrainSet> {
    NoisyTrainSet::from_labeled(num_users, num_items, read_labeled_rows(path)?)
        .with_context(|| format!("loading {}", path.display()))
}

const CHECKPOINT_MAGIC: &str = "# pld checkpoint v1";

/// Text checkpoint: a header with shape and seed, then one row of
/// space-separated floats per user and per item. Floats are written in
/// shortest round-trip form, so loading reproduces the bits.
pub fn write_checkpoint(path: &Path, state: &ModelState) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "num_users {}", state.num_users())?;
        writeln!(w, "num_items {}", state.num_items())?;
        writeln!(w, "dim {}", state.dim())?;
        writeln!(w, "layers {}", state.layers())?;
        writeln!(w, "seed {}", state.seed())?;
        for (tag, m) in [
            ("users", state.user_embeddings()),
            ("items", state.item_embeddings()),
        ] {
            writeln!(w, "{tag}")?;
            for r in 0..m.rows() {
                let mut first = true;
                for x in m.row(r) {
                    if !first {
                        w.write_all(b" ")?;
                    }
                    write!(w, "{x}")?;
                    first = false;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    })
}

pub fn read_checkpoint(path: &Path) -> Result<ModelState> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        bail!("{}: not a pld checkpoint", path.display());
    }
    let mut header = |key: &str| -> Result<u64> {
        let line = lines
            .next()
            .ok_or_else(|| anyhow!("{}: truncated header", path.display()))?;
        let value = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| anyhow!("{}: expected `{key}`, got {line:?}", path.display()))?;
        Ok(value.parse()?)
    };
    let num_users = header("num_users")? as usize;
    let num_items = header("num_items")? as usize;
    let dim = header("dim")? as usize;
    let layers = header("layers")? as usize;
    let seed = header("seed")?;
    let mut table = |tag: &str, rows: usize| -> Result<Matrix> {
        if lines.next() != Some(tag) {
            bail!("{}: missing `{tag}` section", path.display());
        }
        let mut data = Vec::with_capacity(rows * dim);
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| anyhow!("{}: {tag} row {r} missing", path.display()))?;
            let before = data.len();
            for tok in line.split_ascii_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .with_context(|| format!("{}: {tag} row {r}", path.display()))?,
                );
            }
            if data.len() - before != dim {
                bail!(
                    "{}: {tag} row {r} has {} values, expected {dim}",
                    path.display(),
                    data.len() - before
                );
            }
        }
        Ok(Matrix::from_vec(rows, dim, data))
    };
    let users = table("users", num_users)?;
    let items = table("items", num_items)?;
    Ok(ModelState::from_embeddings(users, items, layers, seed)?)
}

/// Serializes `rows` as CSV with a header derived from the record type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pld_core::model::init_model;

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.txt");
        let m = init_model(7, 9, 5, 2, 31).unwrap();
        write_checkpoint(&p, &m).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        fs::write(&p, "hello\n").unwrap();
        assert!(read_checkpoint(&p).is_err());
        fs::write(&p, format!("{CHECKPOINT_MAGIC}\nnum_users 1\nnum_items 1\ndim 2\nlayers 0\nseed 0\nusers\n1 2\nitems\n3\n")).unwrap();
        assert!(read_checkpoint(&p).is_err());
    }

    #[test]
    fn labeled_and_mapping_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let train = InteractionSet::from_pairs(3, 5, [(0, 1), (1, 2), (2, 0), (2, 4)]).unwrap();
        let noisy =
            pld_core::dataset::inject_noise_per_user(&train, 1, 3, &InteractionSet::empty(3, 5))
                .unwrap();
        let p = dir.path().join("train.tsv");
        write_noisy_train(&p, &noisy).unwrap();
        assert_eq!(read_noisy_train(&p, 3, 5).unwrap(), {
            NoisyTrainSet::from_labeled(3, 5, noisy.labeled_rows()).unwrap()
        });
        let names: Vec<String> = ["a b", "x", "7"].iter().map(|s| s.to_string()).collect();
        let q = dir.path().join("ids.tsv");
        write_id_mapping(&q, &names).unwrap();
        assert_eq!(read_id_mapping(&q).unwrap(), names);
    }

    #[test]
    fn load_reports_missing_path() {
        let err = load_interactions(Path::new("/definitely/not/here.txt")).unwrap_err();
        assert!(format!("{err:#}").contains("/definitely/not/here.txt"));
    }
}
