use proptest::prelude::*;
use subspace_core::projections::{fit_pca, sample_jl_seeded};
use subspace_core::synth::{generate_collapse_dataset, CollapseSpec};
use subspace_core::{LabeledDataset, Matrix, ProjectionMatrix, ProjectionMethod, Split};
use subspace_harness::coords::{export_coords, write_coords};
use subspace_harness::emb1::{decode, encode, load_csv, load_embeddings, save_embeddings};
use subspace_harness::HarnessError;

fn read_coords(path: &std::path::Path) -> (Vec<String>, Vec<Vec<f64>>, Vec<usize>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        let n = rec.len();
        coords.push(rec.iter().take(n - 1).map(|v| v.parse().unwrap()).collect());
        labels.push(rec[n - 1].parse().unwrap());
    }
    (header, coords, labels)
}

#[test]
fn three_points_two_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let x = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
    let data = LabeledDataset::new(x, vec![0, 1, 2], 3, Split::Train).unwrap();
    let p = sample_jl_seeded(5, 3, 2).unwrap();
    export_coords(&data, &p, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 4);
    let (header, coords, labels) = read_coords(&path);
    assert_eq!(header, ["c0", "c1", "label"]);
    assert_eq!(labels, [0, 1, 2]);
    // Row i is column i of the map.
    for (i, row) in coords.iter().enumerate() {
        assert_eq!(row, &vec![p.map().get(0, i), p.map().get(1, i)]);
    }
}

#[test]
fn identity_export_reproduces_features() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("id.csv");
    let x = Matrix::from_rows(&[[0.1, -2.5], [1e-17, 3.0e8], [0.3, 0.7]]).unwrap();
    let data = LabeledDataset::new(x.clone(), vec![1, 0, 1], 2, Split::Test).unwrap();
    export_coords(&data, &ProjectionMatrix::identity(2).unwrap(), &path).unwrap();
    let (_, coords, labels) = read_coords(&path);
    assert_eq!(Matrix::from_rows(&coords).unwrap(), x);
    assert_eq!(labels, [1, 0, 1]);
}

#[test]
fn pca_plane_separates_collapse_classes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pca.csv");
    let ds = generate_collapse_dataset(&CollapseSpec::default()).unwrap();
    let fit = fit_pca(ds.train.features(), 2).unwrap();
    write_coords(
        &fit.transform(ds.train.features()).unwrap(),
        ds.train.labels(),
        &path,
    )
    .unwrap();

    let (_, coords, labels) = read_coords(&path);
    let c = 10;
    let mut sums = vec![[0.0f64; 2]; c];
    let mut counts = vec![0usize; c];
    for (p, &l) in coords.iter().zip(&labels) {
        sums[l][0] += p[0];
        sums[l][1] += p[1];
        counts[l] += 1;
    }
    let centres: Vec<[f64; 2]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| [s[0] / n as f64, s[1] / n as f64])
        .collect();
    let dist = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let spread = coords
        .iter()
        .zip(&labels)
        .map(|(p, &l)| dist(p, &centres[l]))
        .sum::<f64>()
        / coords.len() as f64;
    let mut between = 0.0;
    let mut pairs = 0;
    for i in 0..c {
        for j in i + 1..c {
            between += dist(&centres[i], &centres[j]);
            pairs += 1;
        }
    }
    let between = between / pairs as f64;
    assert!(between > 4.0 * spread, "between {between} spread {spread}");
}

#[test]
fn coords_row_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let x = Matrix::zeros(2, 2).unwrap();
    assert!(write_coords(&x, &[0], dir.path().join("x.csv")).is_err());
}

#[test]
fn unwritable_coords_path_is_io_error() {
    let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
    let data = LabeledDataset::new(x, vec![0, 1], 2, Split::Train).unwrap();
    let err = export_coords(
        &data,
        &ProjectionMatrix::identity(1).unwrap(),
        "/nonexistent-dir/c.csv",
    )
    .unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }), "{err:?}");
}

#[test]
fn synthetic_dataset_round_trips_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.emb1");
    let spec = CollapseSpec {
        num_classes: 4,
        ambient_dim: 16,
        samples_per_class: 5,
        ..CollapseSpec::default()
    };
    let ds = generate_collapse_dataset(&spec).unwrap().train;
    save_embeddings(&path, &ds).unwrap();
    assert_eq!(
        std::fs::metadata(&path).unwrap().len(),
        16 + 4 * 20 * 16 + 4 * 20
    );
    let loaded = load_embeddings(&path, Split::Train).unwrap();
    let widened: Vec<f64> = ds
        .features()
        .data()
        .iter()
        .map(|&v| v as f32 as f64)
        .collect();
    assert_eq!(loaded.features().data(), widened.as_slice());
    assert_eq!(loaded.labels(), ds.labels());
    assert_eq!(loaded.num_classes(), 4);
    // A second trip is lossless.
    save_embeddings(&path, &loaded).unwrap();
    assert_eq!(load_embeddings(&path, Split::Train).unwrap(), loaded);
}

#[test]
fn missing_file_is_io_error() {
    let err = load_embeddings("/nonexistent/file.emb1", Split::Train).unwrap_err();
    assert_eq!(err.kind(), "io");
}

#[test]
fn truncated_file_yields_no_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.emb1");
    let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
    let bytes = encode(&LabeledDataset::new(x, vec![0, 1], 2, Split::Train).unwrap()).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    match load_embeddings(&path, Split::Train) {
        Err(HarnessError::Format { offset, .. }) => assert_eq!(offset, bytes.len() as u64 - 5),
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn csv_fixture_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    std::fs::write(&path, "x0,x1,label\n0.5,1.5,0\n-1,2,2\n").unwrap();
    let ds = load_csv(&path, Split::Test, None).unwrap();
    assert_eq!(
        ds.features(),
        &Matrix::from_rows(&[[0.5, 1.5], [-1.0, 2.0]]).unwrap()
    );
    assert_eq!((ds.labels(), ds.num_classes()), (&[0, 2][..], 3));
    std::fs::write(&path, "0.5,1.5,0.5\n").unwrap();
    assert!(load_csv(&path, Split::Test, Some(2)).is_err());
}

#[test]
fn pca_map_is_tagged() {
    let ds = generate_collapse_dataset(&CollapseSpec {
        num_classes: 3,
        ambient_dim: 8,
        samples_per_class: 10,
        ..CollapseSpec::default()
    })
    .unwrap();
    assert_eq!(
        fit_pca(ds.train.features(), 2).unwrap().projection.method(),
        ProjectionMethod::Pca
    );
}

fn dataset_strategy() -> impl Strategy<Value = LabeledDataset> {
    (1usize..6, 1usize..5, 2usize..5).prop_flat_map(|(n, d, c)| {
        (
            prop::collection::vec(-1.0e6f32..1.0e6, n * d),
            prop::collection::vec(0..c, n),
        )
            .prop_map(move |(feats, labels)| {
                let x = Matrix::new(n, d, feats.into_iter().map(f64::from).collect()).unwrap();
                LabeledDataset::new(x, labels, c, Split::Train).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn f32_exact_datasets_round_trip_bitwise(ds in dataset_strategy()) {
        let bytes = encode(&ds).unwrap();
        prop_assert_eq!(bytes.len(), 16 + 4 * ds.len() * (ds.dim() + 1));
        prop_assert_eq!(decode(&bytes, Split::Train).unwrap(), ds);
    }

    #[test]
    fn every_strict_prefix_fails(ds in dataset_strategy(), frac in 0.0f64..1.0) {
        let bytes = encode(&ds).unwrap();
        let cut = ((bytes.len() as f64) * frac) as usize;
        prop_assert!(decode(&bytes[..cut], Split::Train).is_err());
    }
}
