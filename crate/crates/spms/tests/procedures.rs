mod common;

use common::{array, contents, exec_with_keys};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spms::exec::{Exec, ExecOptions};
use spms::fs::{sharing_audit, PERMUTING_WRITES};
use spms::memory::CacheConfig;
use spms::procedures::{
    permuting_writes, prefix_sums, probe_bound, small_multi_merge, straddle_search, tr_prep,
    transposing_redistribution, Directory, PivotTable, Region,
};
use spms::sched::{self, CostModel, SchedOptions};

/// Sequential cache with M = B² and B = 64, streamed as the procedure runs.
fn streamed(keys: Vec<u64>) -> Exec {
    let cache = CacheConfig::new(64 * 64, 64).unwrap();
    let mut m = Exec::new(ExecOptions { cache, stream_cache: true, ..Default::default() });
    m.set_keys(keys);
    m
}

fn recorded(keys: Vec<u64>) -> Exec {
    let mut m = Exec::new(ExecOptions { record: true, ..Default::default() });
    m.set_keys(keys);
    m
}

fn dir_of(m: &mut Exec, entries: &[(u64, u64)]) -> Directory {
    let words: Vec<u64> = entries.iter().flat_map(|&(l, s)| [l, s]).collect();
    let a = array(m, &words);
    Directory::new(Region::whole(a))
}

fn exclusive_scan(values: &[u64]) -> Vec<u64> {
    let mut acc = 0;
    values
        .iter()
        .map(|v| {
            let out = acc;
            acc += v;
            out
        })
        .collect()
}

fn run_prefix(values: &[u64]) -> (Vec<u64>, u64) {
    let mut m = exec_with_keys(Vec::new());
    let src = array(&mut m, values);
    let dst = m.alloc(values.len());
    let total = prefix_sums(&mut m, Region::whole(src).strided(0, 1), values.len(), Region::whole(dst).strided(0, 1));
    (contents(&m, dst), total)
}

#[test]
fn prefix_sums_small_cases() {
    assert_eq!(run_prefix(&[]), (vec![], 0));
    assert_eq!(run_prefix(&[1, 2, 3, 4]), (vec![0, 1, 3, 6], 10));
}

#[test]
fn prefix_sums_match_a_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let values: Vec<u64> = (0..10_000).map(|_| rng.gen_range(0..1_000_000)).collect();
    let (got, total) = run_prefix(&values);
    assert_eq!(got, exclusive_scan(&values));
    assert_eq!(total, values.iter().sum::<u64>());
}

fn search(keys: &[u64], lo: usize, hi: usize, pivot_key: u64) -> usize {
    // The pivot is one extra element after the list, so on equal keys it sorts last.
    let mut all = keys.to_vec();
    all.push(pivot_key);
    let pivot = keys.len() as u64;
    let mut m = exec_with_keys(all);
    let ids: Vec<u64> = (0..keys.len() as u64).collect();
    let list = array(&mut m, &ids);
    m.leaf(|m| straddle_search(m, Region::whole(list), lo, hi, pivot))
}

#[test]
fn straddle_search_cases() {
    let list = [10, 20, 30, 40];
    assert_eq!(search(&list, 0, 4, 25), 2);
    assert_eq!(search(&list, 1, 3, 5), 1);
    assert_eq!(search(&list, 1, 3, 45), 3);
    assert_eq!(search(&list, 0, 4, 45), 4);
    assert_eq!(search(&[], 0, 0, 1), 0);
}

#[test]
fn straddle_search_probe_count_is_logarithmic() {
    for d in [1usize, 2, 3, 7, 8, 100, 1000] {
        let keys: Vec<u64> = (0..d as u64).collect();
        let mut all = keys.clone();
        all.push(d as u64 / 2);
        let mut m = exec_with_keys(all);
        let ids: Vec<u64> = (0..d as u64).collect();
        let list = array(&mut m, &ids);
        let before = m.work();
        m.leaf(|m| straddle_search(m, Region::whole(list), 0, d, d as u64));
        let probes = (m.work() - before) as usize;
        let bound = (usize::BITS - d.leading_zeros()) as usize + 1;
        assert!(probes <= bound.max(probe_bound(d)), "d={d}: {probes} probes");
    }
}

fn transpose_words(y: &[u64], entries: &[(u64, u64)], rows: usize) -> Vec<u64> {
    let mut m = exec_with_keys(Vec::new());
    let ya = array(&mut m, y);
    let dir = dir_of(&mut m, entries);
    let out = m.alloc(y.len());
    transposing_redistribution(&mut m, Region::whole(ya), dir, rows, Region::whole(out), None);
    contents(&m, out)
}

#[test]
fn transpose_hand_example() {
    // Y = [a,b | c | d,e | f] as list 1 = [a,b,c], list 2 = [d,e,f].
    let y = b"abcdef".map(u64::from);
    let got = transpose_words(&y, &[(2, 0), (2, 3), (1, 2), (1, 5)], 2);
    assert_eq!(got, b"abdecf".map(u64::from));
}

#[test]
fn transpose_single_row_or_column_is_a_copy() {
    let y: Vec<u64> = (100..110).collect();
    assert_eq!(transpose_words(&y, &[(3, 0), (0, 3), (7, 3)], 1), y);
    assert_eq!(transpose_words(&y, &[(3, 0), (0, 3), (7, 3)], 3), y);
}

#[test]
#[should_panic(expected = "overlap")]
fn transpose_rejects_overlapping_pieces() {
    let y: Vec<u64> = (0..6).collect();
    transpose_words(&y, &[(3, 0), (3, 2)], 2);
}

/// `pivots` are element ids into the concatenated lists; ids order ties.
fn tr_prep_dir(lists: &[Vec<u64>], pivots: &[u64], window: usize) -> Vec<(u64, u64)> {
    let keys: Vec<u64> = lists.concat();
    let total = keys.len();
    let mut m = exec_with_keys(keys.clone());
    let y: Vec<u64> = (0..total as u64).collect();
    let ya = array(&mut m, &y);
    let mut entries = Vec::new();
    let mut at = 0u64;
    for l in lists {
        entries.push((l.len() as u64, at));
        at += l.len() as u64;
    }
    let dir = dir_of(&mut m, &entries);
    let r = lists.len();
    let stride = 1 + 2 * r;
    let mut ranked = Vec::new();
    for &pv in pivots {
        ranked.push(pv);
        for &(len, start) in &entries {
            let rank = (start..start + len).filter(|&e| (keys[e as usize], e) < (keys[pv as usize], pv)).count();
            ranked.push((rank / window) as u64);
            ranked.push(0);
        }
    }
    let ra = array(&mut m, &ranked);
    let k = pivots.len() + 1;
    let st = m.alloc((k + 1) * r);
    let od = m.alloc(2 * k * r);
    let out_dir = Directory::new(Region::whole(od));
    let table = PivotTable { ranked: Region::whole(ra), first: 0, stride, count: pivots.len(), window, d: window };
    tr_prep(&mut m, Region::whole(ya), dir, &table, Region::whole(st), out_dir);
    out_dir.peek_all(&m)
}

#[test]
fn tr_prep_without_pivots_returns_whole_lists() {
    let lists = vec![vec![1, 5, 9], vec![2, 3], vec![]];
    assert_eq!(tr_prep_dir(&lists, &[], 2), vec![(3, 0), (2, 3), (0, 5)]);
}

#[test]
fn tr_prep_hand_example() {
    let lists = vec![vec![1, 3, 5, 7], vec![2, 4, 6, 8]];
    // The pivot is the element with key 5 (id 2).
    let dir = tr_prep_dir(&lists, &[2], 2);
    // Y11 = [1,3], Y21 = [2,4], Y12 = [5,7], Y22 = [6,8].
    assert_eq!(dir, vec![(2, 0), (2, 4), (2, 2), (2, 6)]);
}

fn permute_words(perm: &[u64], src: &[u64], l1: usize, l2: usize) -> Vec<u64> {
    let x = perm.len();
    let mut m = exec_with_keys(Vec::new());
    let pa = array(&mut m, perm);
    let sa = array(&mut m, src);
    let da = m.alloc(x * l2);
    permuting_writes(&mut m, Region::whole(pa), Region::whole(sa).strided(0, l1), x, Region::whole(da).strided(0, l2));
    contents(&m, da)
}

#[test]
fn permuting_writes_hand_example() {
    let got = permute_words(&[2, 0, 1], &[10, 11, 12], 1, 2);
    assert_eq!([got[0], got[2], got[4]], [11, 12, 10]);
}

#[test]
fn permuting_writes_identity_is_a_copy() {
    let src: Vec<u64> = (0..300).map(|i| i * 3 + 1).collect();
    let perm: Vec<u64> = (0..300).collect();
    assert_eq!(permute_words(&perm, &src, 1, 1), src);
    assert_eq!(permute_words(&perm[..20], &src[..20], 1, 1), src[..20]);
}

#[test]
fn permuting_writes_exhaustive_at_ten_thousand() {
    let x = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut perm: Vec<u64> = (0..x as u64).collect();
    for i in (1..x).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let src: Vec<u64> = (0..x as u64).map(|i| i ^ 0x5555).collect();
    let got = permute_words(&perm, &src, 1, 1);
    for i in 0..x {
        assert_eq!(got[perm[i] as usize], src[i]);
    }
}

#[test]
#[should_panic(expected = "permutation")]
fn permuting_writes_rejects_a_non_permutation() {
    permute_words(&[0, 0, 1], &[1, 2, 3], 1, 1);
}

fn merge_rows(lists: &[Vec<u64>]) -> Vec<u64> {
    let keys: Vec<u64> = lists.concat();
    let mut m = exec_with_keys(keys.clone());
    let ids: Vec<u64> = (0..keys.len() as u64).collect();
    let ya = array(&mut m, &ids);
    let mut entries = Vec::new();
    let mut at = 0;
    for l in lists {
        entries.push((l.len() as u64, at));
        at += l.len() as u64;
    }
    let dir = dir_of(&mut m, &entries);
    let out = m.alloc(keys.len() * (2 * lists.len() + 1));
    small_multi_merge(&mut m, Region::whole(ya), dir, lists.len(), None, Region::whole(out));
    contents(&m, out)
}

#[test]
fn small_multi_merge_hand_example() {
    // Ids 0,1 hold keys 1,4; ids 2,3 hold keys 2,3.
    let got = merge_rows(&[vec![1, 4], vec![2, 3]]);
    let expected = vec![
        0, 0, 1, 0, 1, // key 1
        2, 1, 2, 0, 1, // key 2
        3, 1, 2, 1, 2, // key 3
        1, 1, 2, 2, 3, // key 4
    ];
    assert_eq!(got, expected);
}

#[test]
fn small_multi_merge_single_list_has_trivial_straddles() {
    let got = merge_rows(&[vec![5, 6, 9]]);
    assert_eq!(got, vec![0, 0, 1, 1, 1, 2, 2, 2, 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transpose_matches_naive_reorder(seed in any::<u64>()) {
        common::check_transpose(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn tr_prep_cuts_match_range_filter(seed in any::<u64>()) {
        common::check_tr_prep(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn permuting_writes_places_every_item(seed in any::<u64>()) {
        common::check_permute(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn small_multi_merge_ranks_match_brute_force(seed in any::<u64>()) {
        common::check_small_merge(seed).map_err(TestCaseError::fail)?;
    }
}

/// `count` sorted lists of `len` ids, each cut into `cols` random pieces;
/// the directory lists pieces column by column.
fn cut_lists(rng: &mut ChaCha8Rng, rows: usize, len: usize, cols: usize) -> Vec<(u64, u64)> {
    let mut cuts = Vec::new();
    for i in 0..rows {
        let mut c: Vec<usize> = (0..cols - 1).map(|_| rng.gen_range(0..=len)).collect();
        c.push(0);
        c.push(len);
        c.sort_unstable();
        cuts.push(c.into_iter().map(|v| v + i * len).collect::<Vec<_>>());
    }
    let mut entries = Vec::new();
    for b in 0..cols {
        for c in &cuts {
            entries.push(((c[b + 1] - c[b]) as u64, c[b] as u64));
        }
    }
    entries
}

const TRANSPOSE_MISS_C: f64 = 4.0;
const TR_PREP_MISS_C: f64 = 0.5;
const SMALL_MERGE_MISS_C: f64 = 0.5;

#[test]
fn transpose_misses_within_bound() {
    let (rows, cols, len, block) = (16usize, 16usize, 4096usize, 64.0);
    let y_len = rows * len;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut m = streamed(Vec::new());
    let y: Vec<u64> = (0..y_len as u64).collect();
    let ya = array(&mut m, &y);
    let entries = cut_lists(&mut rng, rows, len, cols);
    let dir = dir_of(&mut m, &entries);
    let out = m.alloc(y_len);
    let start = m.seq_misses().unwrap();
    transposing_redistribution(&mut m, Region::whole(ya), dir, rows, Region::whole(out), None);
    let misses = (m.seq_misses().unwrap() - start) as f64;
    let bound = y_len as f64 / block + (rows * rows * cols) as f64 / block;
    println!("transpose misses {misses} / {bound} = {:.3}", misses / bound);
    assert!(misses <= TRANSPOSE_MISS_C * bound);
}

#[test]
fn tr_prep_misses_within_bound() {
    let (r, len, pivots_n, window, block) = (16usize, 4096usize, 15usize, 64usize, 64.0);
    let total = r * len;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut keys: Vec<u64> = (0..total + pivots_n).map(|_| rng.gen_range(0..1u64 << 40)).collect();
    for i in 0..r {
        keys[i * len..(i + 1) * len].sort_unstable();
    }
    keys[total..].sort_unstable();
    let mut ranked = Vec::new();
    for p in 0..pivots_n {
        let pk = keys[total + p];
        ranked.push((total + p) as u64);
        for i in 0..r {
            let rank = keys[i * len..(i + 1) * len].partition_point(|&k| k <= pk);
            // Ties sort before the pivot because pivots have larger ids.
            ranked.push((rank / window) as u64);
            ranked.push(0);
        }
    }
    let mut m = streamed(keys);
    let y: Vec<u64> = (0..total as u64).collect();
    let ya = array(&mut m, &y);
    let entries: Vec<(u64, u64)> = (0..r).map(|i| (len as u64, (i * len) as u64)).collect();
    let dir = dir_of(&mut m, &entries);
    let ra = array(&mut m, &ranked);
    let k = pivots_n + 1;
    let st = m.alloc((k + 1) * r);
    let od = m.alloc(2 * k * r);
    let table =
        PivotTable { ranked: Region::whole(ra), first: 0, stride: 1 + 2 * r, count: pivots_n, window, d: window };
    let start = m.seq_misses().unwrap();
    tr_prep(&mut m, Region::whole(ya), dir, &table, Region::whole(st), Directory::new(Region::whole(od)));
    let misses = (m.seq_misses().unwrap() - start) as f64;
    let bound = (k * window * r) as f64 / block + (k * r * r) as f64 / block + total as f64 / block;
    println!("tr_prep misses {misses} / {bound} = {:.3}", misses / bound);
    assert!(misses <= TR_PREP_MISS_C * bound);
}

#[test]
fn small_multi_merge_misses_within_bound() {
    let (r, problems, per_list, block) = (4usize, 64usize, 16usize, 64.0);
    let x = r * per_list;
    let total = problems * x;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut keys: Vec<u64> = Vec::with_capacity(total);
    for w in 0..problems as u64 {
        for _ in 0..r {
            let mut list: Vec<u64> = (0..per_list).map(|_| (w << 32) | rng.gen_range(0..1u64 << 20)).collect();
            list.sort_unstable();
            keys.extend(list);
        }
    }
    let mut m = streamed(keys);
    let y: Vec<u64> = (0..total as u64).collect();
    let ya = array(&mut m, &y);
    let entries: Vec<(u64, u64)> = (0..problems * r).map(|e| (per_list as u64, (e * per_list) as u64)).collect();
    let dir = dir_of(&mut m, &entries);
    let out = m.alloc(total * (2 * r + 1));
    let start = m.seq_misses().unwrap();
    small_multi_merge(&mut m, Region::whole(ya), dir, r, None, Region::whole(out));
    let misses = (m.seq_misses().unwrap() - start) as f64;
    let wp = total as f64;
    let bound = (x + r) as f64 * wp / block + wp * r as f64 * (x as f64).sqrt() / block;
    println!("small_multi_merge misses {misses} / {bound} = {:.3}", misses / bound);
    assert!(misses <= SMALL_MERGE_MISS_C * bound);
}

fn permute_misses(x: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(x as u64);
    let mut perm: Vec<u64> = (0..x as u64).collect();
    for i in (1..x).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let mut m = streamed(Vec::new());
    let pa = array(&mut m, &perm);
    let src: Vec<u64> = (0..x as u64).collect();
    let sa = array(&mut m, &src);
    let da = m.alloc(x);
    let start = m.seq_misses().unwrap();
    permuting_writes(&mut m, Region::whole(pa), Region::whole(sa).strided(0, 1), x, Region::whole(da).strided(0, 1));
    m.seq_misses().unwrap() - start
}

#[test]
fn permuting_writes_misses_within_the_quadratic_bound() {
    let sizes = [1usize << 8, 1 << 10, 1 << 12, 1 << 14, 1 << 16];
    let misses: Vec<u64> = sizes.iter().map(|&x| permute_misses(x)).collect();
    for (&x, &q) in sizes.iter().zip(&misses) {
        assert!(q as f64 <= (x * x) as f64 / 64.0, "x={x}: {q} misses");
    }
    let (first, last) = (sizes.len() - 2, sizes.len() - 1);
    let exponent = (misses[last] as f64 / misses[first] as f64).ln() / (sizes[last] as f64 / sizes[first] as f64).ln();
    println!("permuting writes misses {misses:?}, measured exponent {exponent:.2}");
    assert!(exponent < 2.0);
}

/// Worst charged scratch delay of one permuting-writes call with `x < B` on 4 processors.
#[test]
fn small_permuting_writes_scratch_delay_is_bounded() {
    let block = 64;
    for x in [5usize, 17, 40, 63] {
        let mut m = recorded(Vec::new());
        let perm: Vec<u64> = (0..x as u64).rev().collect();
        let pa = array(&mut m, &perm);
        let src: Vec<u64> = (0..x as u64).collect();
        let sa = array(&mut m, &src);
        let da = m.alloc(3 * x);
        permuting_writes(
            &mut m,
            Region::whole(pa),
            Region::whole(sa).strided(0, 1),
            x,
            Region::whole(da).strided(0, 3),
        );
        let rec = m.into_recording().unwrap();
        for seed in 0..5 {
            let s = sched::run(&rec, SchedOptions { procs: 4, seed, cost: CostModel::default() }, None);
            let worst = s.scratch_delay.iter().map(|d| d.1).max().unwrap_or(0);
            assert!(worst <= spms::bench::SCRATCH_DELAY_LIMIT * block, "x={x} seed={seed}: delay {worst}");
        }
    }
}

#[test]
fn procedures_share_few_written_blocks_between_siblings() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (rows, len, cols) = (8usize, 600usize, 8usize);
    let mut m = recorded(Vec::new());
    let y: Vec<u64> = (0..(rows * len) as u64).collect();
    let ya = array(&mut m, &y);
    let entries = cut_lists(&mut rng, rows, len, cols);
    let dir = dir_of(&mut m, &entries);
    let out = m.alloc(rows * len);
    transposing_redistribution(&mut m, Region::whole(ya), dir, rows, Region::whole(out), None);
    let perm: Vec<u64> = (0..500u64).map(|i| (i * 7) % 500).collect();
    let pa = array(&mut m, &perm);
    let dst = m.alloc(500);
    permuting_writes(&mut m, Region::whole(pa), Region::whole(ya).strided(0, 1), 500, Region::whole(dst).strided(0, 1));
    let rec = m.into_recording().unwrap();
    let audit = sharing_audit(&rec);
    assert!(audit.max_shared("transposing_redistribution") <= spms::bench::TR_SHARED_LIMIT);
    assert!(!audit.scopes.contains_key(PERMUTING_WRITES));
}
