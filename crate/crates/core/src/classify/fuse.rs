use super::{Example, LabeledFeatureSet};
use crate::error::{Error, Result};
use crate::features::{FeatureFile, FeatureHeader, FeatureRow};

/// Concatenates feature files row by row. Rows must list the same videos
/// in the same order with the same labels; each block's indices are
/// offset by the total dimension of the blocks before it.
///
/// Zero-dimensional inputs contribute nothing, and a single non-empty input
/// comes back unchanged, header included.
pub fn fuse_feature_files(files: &[FeatureFile]) -> Result<FeatureFile> {
    let first = files.first().ok_or_else(|| Error::Config("nothing to fuse".into()))?;
    for other in &files[1..] {
        check_alignment(&first.rows, &other.rows)?;
    }

    let non_empty: Vec<&FeatureFile> = files.iter().filter(|f| f.header.dim > 0).collect();
    let header = match non_empty.as_slice() {
        [only] => only.header.clone(),
        [] => first.header.clone(),
        _ => FeatureHeader::opaque(files.iter().map(|f| f.header.dim).sum(), "fused"),
    };

    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let values = files[1..]
                .iter()
                .fold(row.values.clone(), |acc, f| acc.concat(&f.rows[i].values));
            FeatureRow {
                video_id: row.video_id.clone(),
                label: row.label,
                values,
            }
        })
        .collect();
    Ok(FeatureFile { header, rows })
}

fn check_alignment(a: &[FeatureRow], b: &[FeatureRow]) -> Result<()> {
    for (ra, rb) in a.iter().zip(b) {
        if ra.video_id != rb.video_id {
            return Err(Error::FusionMismatch {
                video_id: ra.video_id.clone(),
                msg: format!("other input has {:?} at this position", rb.video_id),
            });
        }
        if ra.label != rb.label {
            return Err(Error::FusionMismatch {
                video_id: ra.video_id.clone(),
                msg: format!("labels differ ({:?} vs {:?})", ra.label, rb.label),
            });
        }
    }
    if a.len() != b.len() {
        let extra = if a.len() > b.len() { &a[b.len()] } else { &b[a.len()] };
        return Err(Error::FusionMismatch {
            video_id: extra.video_id.clone(),
            msg: format!("inputs have {} and {} rows", a.len(), b.len()),
        });
    }
    Ok(())
}

pub fn fuse_features(sets: &[LabeledFeatureSet]) -> Result<LabeledFeatureSet> {
    let files: Vec<FeatureFile> = sets.iter().map(LabeledFeatureSet::to_file).collect();
    let fused = fuse_feature_files(&files)?;
    let examples = fused
        .rows
        .into_iter()
        .zip(&sets[0].examples)
        .map(|(row, e)| Example {
            video_id: row.video_id,
            label: e.label,
            features: row.values,
        })
        .collect();
    LabeledFeatureSet::new(fused.header, examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SparseVector;

    type Row<'a> = (&'a str, u32, &'a [(usize, f64)]);

    fn file(dim: usize, rows: &[Row]) -> FeatureFile {
        FeatureFile {
            header: FeatureHeader::opaque(dim, "external"),
            rows: rows
                .iter()
                .map(|(id, l, e)| FeatureRow {
                    video_id: id.to_string(),
                    label: Some(*l),
                    values: SparseVector::from_entries(dim, e.to_vec()).unwrap(),
                })
                .collect(),
        }
    }

    #[test]
    fn single_input_is_identity() {
        let a = file(4, &[("a", 1, &[(0, 1.0)]), ("b", 2, &[(3, 2.0)])]);
        assert_eq!(fuse_feature_files(std::slice::from_ref(&a)).unwrap(), a);
        let empty = file(0, &[("a", 1, &[]), ("b", 2, &[])]);
        assert_eq!(fuse_feature_files(&[a.clone(), empty.clone()]).unwrap(), a);
        assert_eq!(fuse_feature_files(&[empty, a.clone()]).unwrap(), a);
    }

    #[test]
    fn dimensions_add_and_indices_shift() {
        let a = file(10, &[("a", 1, &[(9, 1.0)])]);
        let b = file(20, &[("a", 1, &[(0, 2.0), (19, 3.0)])]);
        let f = fuse_feature_files(&[a, b]).unwrap();
        assert_eq!(f.header.dim, 30);
        assert_eq!(f.header.to_string(), "#DB v1 dim=30 pooling=fused");
        assert_eq!(f.rows[0].values.entries(), &[(9, 1.0), (10, 2.0), (29, 3.0)]);

        let parts = [4200, 44604, 59724].map(|d| file(d, &[("v", 1, &[])]));
        assert_eq!(fuse_feature_files(&parts).unwrap().header.dim, 108528);
    }

    #[test]
    fn mismatches_name_the_video() {
        let a = file(2, &[("a", 1, &[]), ("b", 2, &[])]);
        let swapped = file(2, &[("b", 2, &[]), ("a", 1, &[])]);
        match fuse_feature_files(&[a.clone(), swapped]).unwrap_err() {
            Error::FusionMismatch { video_id, .. } => assert_eq!(video_id, "a"),
            e => panic!("{e}"),
        }
        let relabelled = file(2, &[("a", 1, &[]), ("b", 3, &[])]);
        match fuse_feature_files(&[a.clone(), relabelled]).unwrap_err() {
            Error::FusionMismatch { video_id, .. } => assert_eq!(video_id, "b"),
            e => panic!("{e}"),
        }
        let short = file(2, &[("a", 1, &[])]);
        match fuse_feature_files(&[a, short]).unwrap_err() {
            Error::FusionMismatch { video_id, .. } => assert_eq!(video_id, "b"),
            e => panic!("{e}"),
        }
        assert!(fuse_feature_files(&[]).is_err());
    }

    #[test]
    fn fusion_is_associative() {
        let a = file(3, &[("x", 1, &[(0, 1.0)]), ("y", 2, &[(2, -1.0)])]);
        let b = file(2, &[("x", 1, &[(1, 5.0)]), ("y", 2, &[])]);
        let c = file(4, &[("x", 1, &[(3, 0.5)]), ("y", 2, &[(0, 7.0)])]);
        let nested = fuse_feature_files(&[fuse_feature_files(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
        let flat = fuse_feature_files(&[a, b, c]).unwrap();
        assert_eq!(nested, flat);
    }
}
