use paramsens_bench::{distance_matrix, histogram_pair, result_pair};

#[test]
fn fixtures_are_deterministic_and_valid() {
    let (a, b) = histogram_pair(20);
    assert_eq!((a.bin_count(), b.bin_count()), (20, 20));
    assert_ne!(a.frequencies, b.frequencies);
    assert_eq!(histogram_pair(20).0, a);

    let (r, s) = result_pair(20);
    assert_eq!((r.len(), s.len()), (20, 20));
    assert_eq!(result_pair(20).0, r);

    let d = distance_matrix(10);
    assert!((0..10).all(|i| d[i][i] == 0.0 && (0..10).all(|j| d[i][j] == d[j][i])));
}
