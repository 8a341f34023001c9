//! Reading and writing corpora.
//!
//! On-disk layout of a corpus directory:
//!
//! ```text
//! relations/<name>.csv   one table per relation, header row, key in the first column
//! document.json          {"sections": [{"id", "title", "sentences"}]}
//! claims.jsonl           one Claim per line
//! annotations.jsonl      one Annotation per line
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Annotation, Catalog, Claim, Corpus, CorpusError, Document, Relation};

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), source }
}

/// Parses a numeric cell, stripping space, non-breaking space and comma thousands separators.
/// Empty cells are absent.
pub(crate) fn parse_number(raw: &str) -> Result<Option<f64>, ()> {
    let cleaned: String = raw.chars().filter(|c| !matches!(c, ' ' | ',' | '\u{a0}' | '\u{202f}' | '\u{2009}')).collect();
    if cleaned.is_empty() {
        return Ok(None);
    }
    let cleaned = cleaned.replace('\u{2212}', "-");
    match cleaned.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    }
}

/// Loads one relation; its name is the file stem.
pub fn load_relation_file(path: &Path) -> Result<Relation, CorpusError> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter_for(path)).has_headers(true).flexible(false).from_reader(file);
    let header = reader.headers().map_err(|_| CorpusError::BadHeader(name.clone()))?.clone();
    if header.len() < 2 {
        return Err(CorpusError::BadHeader(name));
    }
    let key_attribute = header[0].trim().to_string();
    let attributes: Vec<String> = header.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut relation = Relation::new(name.clone(), key_attribute, attributes.clone())?;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let key = record[0].trim().to_string();
        let mut cells = Vec::with_capacity(attributes.len());
        for (j, column) in attributes.iter().enumerate() {
            let raw = &record[j + 1];
            let value = parse_number(raw).map_err(|_| CorpusError::NonNumericCell {
                relation: name.clone(),
                row,
                column: column.clone(),
                value: raw.to_string(),
            })?;
            cells.push(value);
        }
        relation.push_row(key, cells)?;
    }
    if relation.rows().is_empty() {
        return Err(CorpusError::NoRows(name));
    }
    Ok(relation)
}

/// Loads every `.csv`/`.tsv` file of a directory, sorted by file name.
pub fn load_relations(dir: &Path) -> Result<Vec<Relation>, CorpusError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "tsv" | "tab")))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_relation_file(p)).collect()
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| CorpusError::Record { line: i + 1, message: e.to_string() })?;
        out.push(item);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("corpus records serialize");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Loads claims, enforcing the kind-specific invariants.
pub fn load_claims(path: &Path) -> Result<Vec<Claim>, CorpusError> {
    read_jsonl::<Claim>(path)?.into_iter().map(Claim::validate).collect()
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>, CorpusError> {
    read_jsonl(path)
}

/// Loads and cross-validates a corpus directory. `annotations.jsonl` is optional.
pub fn load_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    let relations = load_relations(&dir.join("relations"))?;
    let doc_path = dir.join("document.json");
    let doc_text = fs::read_to_string(&doc_path).map_err(|e| io_err(&doc_path, e))?;
    let document: Document = serde_json::from_str(&doc_text).map_err(|e| CorpusError::Record { line: 1, message: e.to_string() })?;
    let claims = load_claims(&dir.join("claims.jsonl"))?;
    let ann_path = dir.join("annotations.jsonl");
    let annotations = if ann_path.exists() { load_annotations(&ann_path)? } else { Vec::new() };
    let corpus = Corpus { catalog: Catalog::new(relations), document, claims, annotations };
    corpus.validate()?;
    Ok(corpus)
}

fn format_cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

/// Writes a corpus in the layout read by [`load_corpus`].
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    let rel_dir = dir.join("relations");
    fs::create_dir_all(&rel_dir).map_err(|e| io_err(&rel_dir, e))?;
    for relation in corpus.catalog.relations() {
        let path = rel_dir.join(format!("{}.csv", relation.name));
        let mut writer = csv::Writer::from_path(&path)?;
        let mut header = vec![relation.key_attribute.clone()];
        header.extend(relation.attributes.iter().cloned());
        writer.write_record(&header)?;
        for (key, cells) in relation.rows() {
            let mut record = vec![key.clone()];
            record.extend(cells.iter().map(|c| format_cell(*c)));
            writer.write_record(&record)?;
        }
        writer.flush().map_err(|e| io_err(&path, e))?;
    }
    let doc_path = dir.join("document.json");
    let mut file = fs::File::create(&doc_path).map_err(|e| io_err(&doc_path, e))?;
    serde_json::to_writer_pretty(&mut file, &corpus.document).expect("document serializes");
    file.write_all(b"\n").map_err(|e| io_err(&doc_path, e))?;
    write_jsonl(&dir.join("claims.jsonl"), &corpus.claims)?;
    write_jsonl(&dir.join("annotations.jsonl"), &corpus.annotations)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn thousands_separators_are_stripped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "GED.csv", "Index,2017,2018\nPGElecDemand,\"22 209\",\"22 793\"\n");
        let r = load_relation_file(&p).unwrap();
        assert_eq!(r.name, "GED");
        assert_eq!(r.key_attribute, "Index");
        assert_eq!(r.get("PGElecDemand", "2017"), Some(22209.0));
        assert_eq!(r.get("PGElecDemand", "2018"), Some(22793.0));
        assert_eq!(parse_number("1,234.5"), Ok(Some(1234.5)));
    }

    #[test]
    fn empty_body_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "T.csv", "Index,2017\n");
        let err = load_relation_file(&p).unwrap_err();
        assert!(err.to_string().contains("no rows"), "{err}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "GED.csv", "Index,2017\nPGElecDemand,1\nPGElecDemand,2\n");
        match load_relation_file(&p).unwrap_err() {
            CorpusError::DuplicateKey { relation, key, row } => {
                assert_eq!((relation.as_str(), key.as_str(), row), ("GED", "PGElecDemand", 2));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_numeric_cells_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "GED.csv", "Index,2017\nPGElecDemand,lots\n");
        assert!(matches!(load_relation_file(&p), Err(CorpusError::NonNumericCell { .. })));
    }

    #[test]
    fn claim_records_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "claims.jsonl",
            concat!(
                r#"{"id":"c1","sentence":"Global electricity demand grew by 3% in 2018.","span":[0,36],"section":"s1","kind":"explicit","parameter":0.03}"#,
                "\n",
                r#"{"id":"c2","sentence":"Solar PV capacity expanded aggressively.","span":[0,39],"section":"s1","kind":"general"}"#,
                "\n"
            ),
        );
        let claims = load_claims(&p).unwrap();
        assert_eq!(claims[0].comparison, Some(crate::formula::CmpOp::Eq));
        assert_eq!(claims[0].tolerance, crate::corpus::DEFAULT_TOLERANCE);
        assert_eq!(claims[1].parameter, None);

        let bad = write(
            dir.path(),
            "bad.jsonl",
            r#"{"id":"c3","sentence":"x","span":[0,1],"section":"s1","kind":"general","tolerance":1.5}"#,
        );
        assert!(load_claims(&bad).unwrap_err().to_string().contains("tolerance"));
        let missing = write(dir.path(), "m.jsonl", r#"{"id":"c4","sentence":"x","span":[0,1],"section":"s1","kind":"explicit"}"#);
        assert!(load_claims(&missing).unwrap_err().to_string().contains("without parameter"));
    }
}
