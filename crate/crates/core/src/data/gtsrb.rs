use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{DataSource, TestSet};
use crate::error::{Error, Result};
use crate::imageops::{load_png, resize, Image};

pub const GTSRB_CLASSES: usize = 43;

const COLUMNS: [&str; 8] = ["Filename", "Width", "Height", "Roi.X1", "Roi.Y1", "Roi.X2", "Roi.Y2", "ClassId"];

#[derive(Debug, Clone, PartialEq, Eq)]
struct Row {
    line: usize,
    file: String,
    width: usize,
    height: usize,
    roi: [usize; 4],
    class: usize,
}

fn parse_annotations(text: &str, csv: &Path) -> Result<Vec<Row>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::dataset(format!("{} is empty", csv.display())))?;
    let cols: Vec<&str> = header.trim().split(';').collect();
    let index = COLUMNS
        .iter()
        .map(|name| {
            cols.iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::dataset(format!("{}: header lacks column {name}", csv.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let fields: Vec<&str> = line.trim().split(';').collect();
        let bad = |what: &str| Error::dataset(format!("{} line {line_no}: {what}", csv.display()));
        if fields.len() != cols.len() {
            return Err(bad(&format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let num = |k: usize| -> Result<usize> {
            fields[index[k]].trim().parse().map_err(|_| bad(&format!("{} is not an integer", COLUMNS[k])))
        };
        let class = num(7)?;
        if class >= GTSRB_CLASSES {
            return Err(bad(&format!("ClassId {class} outside [0, {GTSRB_CLASSES})")));
        }
        rows.push(Row {
            line: line_no,
            file: fields[index[0]].trim().to_string(),
            width: num(1)?,
            height: num(2)?,
            roi: [num(3)?, num(4)?, num(5)?, num(6)?],
            class,
        });
    }
    Ok(rows)
}

fn find_annotations(root: &Path) -> Result<PathBuf> {
    let preferred = root.join("GT-final_test.csv");
    if preferred.is_file() {
        return Ok(preferred);
    }
    let mut csvs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::missing("GTSRB test directory", root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    csvs.sort();
    match csvs.len() {
        1 => Ok(csvs.remove(0)),
        0 => Err(Error::dataset(format!("no annotation CSV in {}", root.display()))),
        _ => Err(Error::dataset(format!(
            "several CSV files in {}; name the annotations GT-final_test.csv",
            root.display()
        ))),
    }
}

/// Crops the inclusive ROI `[x1, y1, x2, y2]`.
fn crop(img: &Image, roi: [usize; 4]) -> Option<Image> {
    let [x1, y1, x2, y2] = roi;
    if x1 > x2 || y1 > y2 || x2 >= img.width() || y2 >= img.height() {
        return None;
    }
    if (x1, y1, x2 + 1, y2 + 1) == (0, 0, img.width(), img.height()) {
        return Some(img.clone());
    }
    let ch = img.channels();
    let (w, h) = (x2 - x1 + 1, y2 - y1 + 1);
    let mut px = Vec::with_capacity(w * h * ch);
    for y in y1..=y2 {
        let start = (y * img.width() + x1) * ch;
        px.extend_from_slice(&img.pixels()[start..start + w * ch]);
    }
    Image::new(h, w, ch, px, None).ok()
}

/// Loads the GTSRB final test split: every annotated image is cropped to its
/// ROI and resized to `image_size` squared RGB. The result is ordered by
/// file name.
pub fn load_gtsrb_test(root: &Path, image_size: usize) -> Result<TestSet> {
    let csv = find_annotations(root)?;
    let text = std::fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?;
    let mut rows = parse_annotations(&text, &csv)?;
    rows.sort_by(|a, b| a.file.cmp(&b.file));
    if let Some(w) = rows.windows(2).find(|w| w[0].file == w[1].file) {
        return Err(Error::dataset(format!("{} is annotated twice (line {})", w[1].file, w[1].line)));
    }
    let base = csv.parent().unwrap_or(root).to_path_buf();
    let images = rows
        .par_iter()
        .map(|row| {
            let path = base.join(&row.file);
            if !path.is_file() {
                return Err(Error::dataset(format!("{} (line {}) does not exist", path.display(), row.line)));
            }
            let img = load_png(&path)?.without_alpha().to_channels(3)?;
            if (img.width(), img.height()) != (row.width, row.height) {
                return Err(Error::dataset(format!(
                    "{} is {}x{} but line {} says {}x{}",
                    row.file,
                    img.width(),
                    img.height(),
                    row.line,
                    row.width,
                    row.height
                )));
            }
            let roi = crop(&img, row.roi).ok_or_else(|| {
                Error::dataset(format!("line {}: ROI {:?} does not fit {}", row.line, row.roi, row.file))
            })?;
            resize(&roi, image_size, image_size)
        })
        .collect::<Result<Vec<_>>>()?;
    let on_disk = std::fs::read_dir(&base)
        .map_err(|e| Error::io(&base, e))?
        .filter_map(|e| e.ok())
        .filter(|e| matches!(e.path().extension().and_then(|x| x.to_str()), Some("ppm" | "png")))
        .count();
    if on_disk != rows.len() {
        let annotated: std::collections::HashSet<&str> = rows.iter().map(|r| r.file.as_str()).collect();
        let missing = std::fs::read_dir(&base)
            .map_err(|e| Error::io(&base, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| (n.ends_with(".ppm") || n.ends_with(".png")) && !annotated.contains(n.as_str()))
            .min();
        if let Some(name) = missing {
            return Err(Error::dataset(format!("{name} has no annotation row in {}", csv.display())));
        }
    }
    if images.is_empty() {
        return Err(Error::dataset(format!("{} lists no images", csv.display())));
    }
    TestSet::new(images, rows.iter().map(|r| r.class).collect(), DataSource::Gtsrb, GTSRB_CLASSES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::save_png;

    const HEADER: &str = "Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId";

    #[test]
    fn parses_rows_and_reports_lines() {
        let csv = Path::new("t.csv");
        let rows = parse_annotations(&format!("{HEADER}\n00000.ppm;53;54;6;5;48;49;16\n"), csv).unwrap();
        assert_eq!(rows[0].roi, [6, 5, 48, 49]);
        assert_eq!(rows[0].class, 16);
        let err = parse_annotations(&format!("{HEADER}\na;1;1;0;0;0;0;1\nb;1;1;0;0;0\n"), csv).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_annotations(&format!("{HEADER}\na;1;1;0;0;0;0;43\n"), csv).unwrap_err();
        assert!(err.to_string().contains("ClassId 43"), "{err}");
    }

    #[test]
    fn full_frame_roi_is_identity_crop() {
        let img = Image::new(2, 3, 3, (0..18).map(|v| v as f32 / 17.0).collect(), None).unwrap();
        assert_eq!(crop(&img, [0, 0, 2, 1]).unwrap(), img);
        let c = crop(&img, [1, 1, 2, 1]).unwrap();
        assert_eq!((c.height(), c.width()), (1, 2));
        assert_eq!(c.pixel(0, 0, 0), img.pixel(1, 1, 0));
        assert!(crop(&img, [0, 0, 3, 1]).is_none());
    }

    #[test]
    fn loads_small_tree() {
        let dir = tempfile::tempdir().unwrap();
        let red = Image::new(4, 4, 3, [1.0, 0.0, 0.0].repeat(16), None).unwrap();
        save_png(&red, &dir.path().join("00001.png")).unwrap();
        save_png(&red, &dir.path().join("00000.png")).unwrap();
        std::fs::write(
            dir.path().join("GT-final_test.csv"),
            format!("{HEADER}\n00001.png;4;4;0;0;3;3;2\n00000.png;4;4;1;1;2;2;5\n"),
        )
        .unwrap();
        let set = load_gtsrb_test(dir.path(), 8).unwrap();
        assert_eq!(set.labels, [5, 2]);
        assert_eq!(set.dims(), Some([3, 8, 8]));
        assert!((set.images[0].pixel(3, 3, 0) - 1.0).abs() < 1e-6);

        save_png(&red, &dir.path().join("00002.png")).unwrap();
        let err = load_gtsrb_test(dir.path(), 8).unwrap_err();
        assert!(err.to_string().contains("00002.png"), "{err}");
    }
}
