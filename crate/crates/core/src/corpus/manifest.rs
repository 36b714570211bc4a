use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AudioSource, Corpus, Passage, Query};
use crate::dsp::{read_wav_spec, write_wav, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Passage {
        id: String,
        audio: String,
        transcript: String,
    },
    Query {
        text: String,
        answer: String,
        passage_id: String,
    },
}

/// Loads a JSONL manifest. Audio paths are resolved relative to the
/// manifest's directory; only WAV headers are read here, samples are loaded
/// on demand through [`AudioSource::load`].
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let malformed = |line: usize, message: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut passages = Vec::new();
    let mut queries = Vec::new();
    let mut sample_rate: Option<u32> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        match record {
            Record::Passage {
                id,
                audio,
                transcript,
            } => {
                if transcript.trim().is_empty() {
                    return Err(malformed(lineno, "empty transcript".into()));
                }
                let audio_path = base.join(&audio);
                let spec = read_wav_spec(&audio_path)?;
                match sample_rate {
                    None => sample_rate = Some(spec.sample_rate),
                    Some(sr) if sr != spec.sample_rate => {
                        return Err(Error::SampleRateMismatch {
                            expected: sr,
                            found: spec.sample_rate,
                            context: format!("{}:{lineno}", path.display()),
                        })
                    }
                    Some(_) => {}
                }
                passages.push(Passage {
                    id,
                    audio: AudioSource::File(audio_path),
                    transcript,
                });
            }
            Record::Query {
                text,
                answer,
                passage_id,
            } => queries.push(Query {
                text,
                gold_answer: answer,
                relevant_passage_id: passage_id,
            }),
        }
    }
    Corpus::new(passages, queries, sample_rate.unwrap_or(SAMPLE_RATE))
}

fn audio_file_name(index: usize, id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("{index:05}_{safe}.wav")
}

/// Writes `manifest_path` plus one WAV per passage under `audio/` next to it.
pub fn write_manifest(corpus: &Corpus, manifest_path: impl AsRef<Path>) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let audio_dir = base.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;

    let file = File::create(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut out = BufWriter::new(file);
    let mut write_line = |record: &Record| -> Result<()> {
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(manifest_path, e))
    };
    for (i, p) in corpus.passages().iter().enumerate() {
        let rel = PathBuf::from("audio").join(audio_file_name(i, &p.id));
        write_wav(base.join(&rel), &p.audio.load()?)?;
        write_line(&Record::Passage {
            id: p.id.clone(),
            audio: rel.to_string_lossy().replace('\\', "/"),
            transcript: p.transcript.clone(),
        })?;
    }
    for q in corpus.queries() {
        write_line(&Record::Query {
            text: q.text.clone(),
            answer: q.gold_answer.clone(),
            passage_id: q.relevant_passage_id.clone(),
        })?;
    }
    out.flush().map_err(|e| Error::io(manifest_path, e))
}
