//! Synthetic text images: bitmap-font line rendering, line stacking, seeded
//! corpora on disk and the PGM codec they use.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font::{glyph, GLYPH_COLS, GLYPH_ROWS};
use crate::tensor::Tensor;
use crate::vocab::Vocab;

/// Joins the transcripts of stacked lines.
pub const LINE_SEPARATOR: &str = " ";
/// Blank font columns after every glyph.
const GLYPH_SPACING: usize = 1;

/// Per-character placement noise, in output pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jitter {
    /// Vertical offsets are drawn from `[-vertical, vertical]`.
    pub vertical: usize,
    /// Extra advance drawn from `[0, advance]`.
    pub advance: usize,
}

impl Jitter {
    pub const OFF: Jitter = Jitter {
        vertical: 0,
        advance: 0,
    };
    pub const DEFAULT: Jitter = Jitter {
        vertical: 1,
        advance: 1,
    };
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub n_lines: usize,
    pub source_id: String,
    pub augmentation: String,
}

/// A grayscale text image with ink 1 on background 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `H x W x 1`
    pub image: Tensor<f32>,
    pub transcript: String,
    pub meta: SampleMeta,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[1]
    }
}

/// Line height for `scale` and `jitter`: the scaled glyph plus room for the
/// vertical offsets.
pub fn line_height(scale: usize, jitter: Jitter) -> usize {
    GLYPH_ROWS * scale + 2 * jitter.vertical
}

/// Renders `text` with the built-in font at `scale` pixels per font cell.
/// Every glyph advances `(5 + 1) * scale` pixels plus its jitter.
pub fn render_line(text: &str, scale: usize, jitter: Jitter, seed: u64) -> Result<Sample> {
    if text.is_empty() {
        return Err(Error::Domain("cannot render an empty line".into()));
    }
    if scale < 2 {
        return Err(Error::Domain(format!(
            "render scale must be at least 2, got {scale}"
        )));
    }
    let glyphs = text
        .chars()
        .map(|c| glyph(c).ok_or(Error::UnknownChar(c)))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = (GLYPH_COLS + GLYPH_SPACING) * scale;
    let placements: Vec<(usize, i64)> = glyphs
        .iter()
        .map(|_| {
            let extra = rng.gen_range(0..=jitter.advance);
            let v = jitter.vertical as i64;
            (base + extra, rng.gen_range(-v..=v))
        })
        .collect();
    let height = line_height(scale, jitter);
    let width: usize = placements.iter().map(|p| p.0).sum();
    let mut image = Tensor::zeros(&[height, width, 1]);
    let mut x0 = 0;
    for (g, &(advance, dy)) in glyphs.iter().zip(&placements) {
        let y0 = (jitter.vertical as i64 + dy) as usize;
        for r in 0..GLYPH_ROWS {
            for c in 0..GLYPH_COLS {
                if !g.ink(r, c) {
                    continue;
                }
                for i in 0..scale {
                    for j in 0..scale {
                        image.set3(y0 + r * scale + i, x0 + c * scale + j, 0, 1.0);
                    }
                }
            }
        }
        x0 += advance;
    }
    Ok(Sample {
        image,
        transcript: text.to_owned(),
        meta: SampleMeta {
            n_lines: 1,
            source_id: String::new(),
            augmentation: String::new(),
        },
    })
}

/// Stacks lines top to bottom, left aligned, with `gap_px` background rows
/// between consecutive lines.
pub fn stack_lines(samples: &[Sample], gap_px: usize) -> Result<Sample> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Domain("stack_lines needs at least one line".into()))?;
    if samples.len() == 1 {
        return Ok(first.clone());
    }
    let width = samples.iter().map(Sample::width).max().unwrap_or(0);
    let height = samples.iter().map(Sample::height).sum::<usize>() + gap_px * (samples.len() - 1);
    let mut image = Tensor::zeros(&[height, width, 1]);
    let mut y0 = 0;
    for s in samples {
        let w = s.width();
        for i in 0..s.height() {
            let src = &s.image.data()[i * w..(i + 1) * w];
            image.data_mut()[(y0 + i) * width..(y0 + i) * width + w].copy_from_slice(src);
        }
        y0 += s.height() + gap_px;
    }
    let transcript = samples
        .iter()
        .map(|s| s.transcript.as_str())
        .collect::<Vec<_>>()
        .join(LINE_SEPARATOR);
    Ok(Sample {
        image,
        transcript,
        meta: SampleMeta {
            n_lines: samples.iter().map(|s| s.meta.n_lines).sum(),
            source_id: first.meta.source_id.clone(),
            augmentation: first.meta.augmentation.clone(),
        },
    })
}

/// Parameters of a generated corpus; written next to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_samples: usize,
    /// Inclusive range of characters per line.
    pub chars_per_line: [usize; 2],
    /// Inclusive range of lines per sample.
    pub lines: [usize; 2],
    /// `digits`, `iam` or a literal character list.
    pub vocab: String,
    pub seed: u64,
    pub scale: usize,
    pub jitter: Jitter,
    pub gap_px: usize,
    /// Also write every shorter run of consecutive lines of each multi-line
    /// training sample as an extra training record.
    pub augment_train: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_samples: 2000,
            chars_per_line: [3, 10],
            lines: [1, 1],
            vocab: "digits".into(),
            seed: 0,
            scale: 4,
            jitter: Jitter::DEFAULT,
            gap_px: 8,
            augment_train: false,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<Vocab> {
        let [c0, c1] = self.chars_per_line;
        let [l0, l1] = self.lines;
        if c0 == 0 || c0 > c1 {
            return Err(Error::Config(format!(
                "chars_per_line range {c0}..={c1} is empty or starts at 0"
            )));
        }
        if l0 == 0 || l0 > l1 {
            return Err(Error::Config(format!(
                "lines range {l0}..={l1} is empty or starts at 0"
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if self.scale < 2 {
            return Err(Error::Config(format!(
                "scale must be at least 2, got {}",
                self.scale
            )));
        }
        let vocab = Vocab::named(&self.vocab)?;
        if let Some(c) = vocab.chars().iter().find(|&&c| glyph(c).is_none()) {
            return Err(Error::Config(format!(
                "the font has no glyph for vocabulary character {c:?}"
            )));
        }
        if line_alphabet(&vocab).is_empty() {
            return Err(Error::Config(
                "vocabulary has no printable characters".into(),
            ));
        }
        Ok(vocab)
    }
}

/// Characters drawn for line content: the vocabulary minus space, which only
/// appears as the line separator.
pub fn line_alphabet(vocab: &Vocab) -> Vec<char> {
    vocab
        .chars()
        .iter()
        .copied()
        .filter(|&c| c != ' ')
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!(
                "unknown split {s:?} (train|val|test)"
            ))),
        }
    }

    /// 80/10/10 by sample index.
    pub fn of_index(index: usize, n: usize) -> Self {
        if index * 10 < n * 8 {
            Split::Train
        } else if index * 10 < n * 9 {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// One line of `manifest.jsonl`, fields in this order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    /// Relative to the corpus root.
    pub path: String,
    pub transcript: String,
    pub n_lines: usize,
    pub split: Split,
    /// Which lines of the source sample an augmented record holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CORPUS_SPEC_FILE: &str = "corpus.json";

/// Per-sample generator stream: the corpus seed with the sample index as
/// stream id, so samples are independent of generation order.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index as u64);
    r
}

/// Line texts of sample `index`, drawn uniformly from [`line_alphabet`].
pub fn sample_lines(spec: &CorpusSpec, vocab: &Vocab, index: usize) -> Vec<String> {
    sample_plan(spec, vocab, index).0
}

fn sample_plan(spec: &CorpusSpec, vocab: &Vocab, index: usize) -> (Vec<String>, Vec<u64>) {
    let alphabet = line_alphabet(vocab);
    let mut rng = sample_rng(spec.seed, index);
    let n_lines = rng.gen_range(spec.lines[0]..=spec.lines[1]);
    let texts: Vec<String> = (0..n_lines)
        .map(|_| {
            let len = rng.gen_range(spec.chars_per_line[0]..=spec.chars_per_line[1]);
            (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect()
        })
        .collect();
    let seeds = texts.iter().map(|_| rng.gen()).collect();
    (texts, seeds)
}

/// The rendered lines of sample `index`, top to bottom.
pub fn generate_lines(spec: &CorpusSpec, vocab: &Vocab, index: usize) -> Result<Vec<Sample>> {
    let (texts, seeds) = sample_plan(spec, vocab, index);
    texts
        .iter()
        .zip(seeds)
        .map(|(t, seed)| {
            let mut line = render_line(t, spec.scale, spec.jitter, seed)?;
            line.meta.source_id = format!("{index:06}");
            Ok(line)
        })
        .collect()
}

/// Builds sample `index` of the corpus described by `spec`.
pub fn generate_sample(spec: &CorpusSpec, vocab: &Vocab, index: usize) -> Result<Sample> {
    stack_lines(&generate_lines(spec, vocab, index)?, spec.gap_px)
}

/// Writes every sample as `images/<index>.pgm`, then `manifest.jsonl` and
/// `corpus.json` under `root`. With `augment_train`, line runs of training
/// samples follow their source as `images/<index>-l<first>-<last>.pgm`.
pub fn generate_corpus(spec: &CorpusSpec, root: &Path) -> Result<Vec<ManifestRecord>> {
    let vocab = spec.validate()?;
    let images = root.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut records = Vec::with_capacity(spec.n_samples);
    let mut write =
        |rel: String, s: &Sample, split: Split, augmentation: Option<String>| -> Result<()> {
            write_pgm(&root.join(&rel), &s.image)?;
            records.push(ManifestRecord {
                path: rel,
                transcript: s.transcript.clone(),
                n_lines: s.meta.n_lines,
                split,
                augmentation,
            });
            Ok(())
        };
    for index in 0..spec.n_samples {
        let lines = generate_lines(spec, &vocab, index)?;
        let split = Split::of_index(index, spec.n_samples);
        write(
            format!("images/{index:06}.pgm"),
            &stack_lines(&lines, spec.gap_px)?,
            split,
            None,
        )?;
        if spec.augment_train && split == Split::Train {
            let n = lines.len();
            for start in 0..n {
                for end in start + 1..=n {
                    if end - start == n {
                        continue;
                    }
                    let label = format!("lines {}-{end}", start + 1);
                    let rel = format!("images/{index:06}-l{}-{end}.pgm", start + 1);
                    write(
                        rel,
                        &stack_lines(&lines[start..end], spec.gap_px)?,
                        split,
                        Some(label),
                    )?;
                }
            }
        }
    }
    write_manifest(&root.join(MANIFEST_FILE), &records)?;
    let spec_path = root.join(CORPUS_SPEC_FILE);
    let json = serde_json::to_string_pretty(spec).expect("corpus spec serializes");
    fs::write(&spec_path, json + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out += &serde_json::to_string(r).expect("manifest record serializes");
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Reads `corpus.json` if present.
pub fn read_corpus_spec(root: &Path) -> Result<Option<CorpusSpec>> {
    let path = root.join(CORPUS_SPEC_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::format(&path, e.to_string()))
}

/// A loaded corpus sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub image: Tensor<f32>,
    pub transcript: String,
    pub n_lines: usize,
}

/// A corpus root with its manifest and (optional) generation spec.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
    pub spec: Option<CorpusSpec>,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Self> {
        let records = read_manifest(&root.join(MANIFEST_FILE))?;
        Ok(Corpus {
            root: root.to_owned(),
            records,
            spec: read_corpus_spec(root)?,
        })
    }

    /// Loads every image of `split` in manifest order.
    pub fn load(&self, split: Split) -> Result<Vec<Example>> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                let path = self.root.join(&r.path);
                Ok(Example {
                    id: r.path.clone(),
                    image: read_pgm(&path)?,
                    transcript: r.transcript.clone(),
                    n_lines: r.n_lines,
                })
            })
            .collect()
    }

    /// Characters of every transcript missing from `vocab`.
    pub fn unknown_chars(&self, vocab: &Vocab) -> Vec<char> {
        let mut out: Vec<char> = self
            .records
            .iter()
            .flat_map(|r| r.transcript.chars())
            .filter(|&c| !vocab.contains(c))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Binary PGM (P5, maxval 255). Values in `[0, 1]` map to `round(255 v)`.
pub fn encode_pgm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w) = match image.shape() {
        &[h, w, 1] | &[h, w] => (h, w),
        s => return Err(Error::dim("encode_pgm", s, &[0, 0, 1])),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn write_pgm(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let bytes = encode_pgm(image)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Parses P5 data with any maxval up to 255 into an `H x W x 1` tensor in
/// `[0, 1]`. Comments in the header are skipped.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::format(
            path,
            format!("expected binary PGM magic P5, found {:?}", fields[0]),
        ));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad PGM {what} {s:?}")))
    };
    let (w, h, maxval) = (
        num(&fields[1], "width")?,
        num(&fields[2], "height")?,
        num(&fields[3], "maxval")?,
    );
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return Err(Error::format(
            path,
            format!("unsupported PGM geometry {w}x{h} maxval {maxval}"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| Error::format(path, format!("PGM raster shorter than {w}x{h}")))?;
    let scale = maxval as f32;
    let data = raster
        .iter()
        .map(|&b| (b as f32 / scale).min(1.0))
        .collect();
    Tensor::from_vec(&[h, w, 1], data)
}

pub fn read_pgm(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}
