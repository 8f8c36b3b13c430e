//! Random instances of the Step 1 procedures and their brute-force oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spms::exec::{Exec, ExecOptions};
use spms::memory::SimArray;
use spms::procedures::{
    permuting_writes, small_multi_merge, tr_prep, transposing_redistribution, Directory, PivotTable, Region,
};

pub fn exec_with_keys(keys: Vec<u64>) -> Exec {
    let mut m = Exec::new(ExecOptions::default());
    m.set_keys(keys);
    m
}

pub fn array(m: &mut Exec, words: &[u64]) -> SimArray {
    let a = m.alloc(words.len());
    for (i, &w) in words.iter().enumerate() {
        m.poke(a, i, w);
    }
    a
}

pub fn contents(m: &Exec, a: SimArray) -> Vec<u64> {
    (0..a.len).map(|i| m.peek(a, i)).collect()
}

/// Order on element ids: key first, then id.
fn before(keys: &[u64], x: u64, y: u64) -> bool {
    (keys[x as usize], x) < (keys[y as usize], y)
}

fn sorted_ids(keys: &[u64], mut ids: Vec<u64>) -> Vec<u64> {
    ids.sort_by_key(|&i| (keys[i as usize], i));
    ids
}

fn random_keys(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    // Small key range so ties are common.
    let range = rng.gen_range(1..=n.max(1) as u64 * 2);
    (0..n).map(|_| rng.gen_range(0..range)).collect()
}

/// Pieces of `rows` lists cut into `cols` columns, stored list by list;
/// transposed output must be column-major.
pub fn check_transpose(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.gen_range(1..=12);
    let cols = rng.gen_range(1..=12);
    let mut lens = vec![vec![0usize; cols]; rows];
    let mut total = 0;
    for row in lens.iter_mut() {
        for l in row.iter_mut() {
            *l = if rng.gen_bool(0.2) { 0 } else { rng.gen_range(0..=12) };
            total += *l;
        }
    }
    let y: Vec<u64> = (0..total as u64).map(|_| rng.gen()).collect();
    let mut starts = vec![vec![0usize; cols]; rows];
    let mut at = 0;
    for i in 0..rows {
        for b in 0..cols {
            starts[i][b] = at;
            at += lens[i][b];
        }
    }
    let mut expected = Vec::new();
    let mut dir_words = Vec::new();
    for b in 0..cols {
        for i in 0..rows {
            dir_words.push(lens[i][b] as u64);
            dir_words.push(starts[i][b] as u64);
            expected.extend_from_slice(&y[starts[i][b]..starts[i][b] + lens[i][b]]);
        }
    }
    let mut m = exec_with_keys(Vec::new());
    let ya = array(&mut m, &y);
    let da = array(&mut m, &dir_words);
    let out = m.alloc(total);
    let od = m.alloc(dir_words.len());
    transposing_redistribution(
        &mut m,
        Region::whole(ya),
        Directory::new(Region::whole(da)),
        rows,
        Region::whole(out),
        Some(Directory::new(Region::whole(od))),
    );
    let got = contents(&m, out);
    if got != expected {
        return Err(format!("seed {seed}: transposed output differs"));
    }
    let od_words = contents(&m, od);
    let mut pos = 0u64;
    for e in 0..rows * cols {
        if od_words[2 * e] != dir_words[2 * e] || od_words[2 * e + 1] != pos {
            return Err(format!("seed {seed}: output directory entry {e} wrong"));
        }
        pos += dir_words[2 * e];
    }
    Ok(())
}

/// Cuts sorted lists at sorted pivots from straddle hints `window` apart.
pub fn check_tr_prep(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(1..=8);
    let lens: Vec<usize> = (0..r).map(|_| rng.gen_range(0..=60)).collect();
    let total: usize = lens.iter().sum();
    let pivots_n = rng.gen_range(0..=10);
    let keys = random_keys(&mut rng, total + pivots_n);
    // Elements 0..total fill the lists; total.. are pivots.
    let mut lists: Vec<Vec<u64>> = Vec::new();
    let mut next = 0u64;
    for &l in &lens {
        lists.push(sorted_ids(&keys, (next..next + l as u64).collect()));
        next += l as u64;
    }
    let pivots = sorted_ids(&keys, (total as u64..(total + pivots_n) as u64).collect());
    let window = rng.gen_range(1..=8);
    let stride = 1 + 2 * r;
    let mut ranked = vec![0u64; pivots_n * stride];
    for (p, &pv) in pivots.iter().enumerate() {
        ranked[p * stride] = pv;
        for (i, list) in lists.iter().enumerate() {
            let rank = list.iter().filter(|&&e| before(&keys, e, pv)).count();
            ranked[p * stride + 1 + 2 * i] = (rank / window) as u64;
        }
    }
    let y: Vec<u64> = lists.concat();
    let mut dir_words = Vec::new();
    let mut at = 0;
    for &l in &lens {
        dir_words.push(l as u64);
        dir_words.push(at as u64);
        at += l;
    }
    let k = pivots_n + 1;
    let mut m = exec_with_keys(keys.clone());
    let ya = array(&mut m, &y);
    let da = array(&mut m, &dir_words);
    let ra = array(&mut m, &ranked);
    let st = m.alloc((k + 1) * r);
    let od = m.alloc(2 * k * r);
    let table = PivotTable { ranked: Region::whole(ra), first: 0, stride, count: pivots_n, window, d: window };
    tr_prep(
        &mut m,
        Region::whole(ya),
        Directory::new(Region::whole(da)),
        &table,
        Region::whole(st),
        Directory::new(Region::whole(od)),
    );
    let got = contents(&m, od);
    for b in 0..k {
        for (i, list) in lists.iter().enumerate() {
            let e = b * r + i;
            let (len, start) = (got[2 * e] as usize, got[2 * e + 1] as usize);
            let piece = &y[start..start + len];
            let want: Vec<u64> = list
                .iter()
                .copied()
                .filter(|&x| {
                    (b == 0 || !before(&keys, x, pivots[b - 1])) && (b == k - 1 || before(&keys, x, pivots[b]))
                })
                .collect();
            if piece != want.as_slice() {
                return Err(format!("seed {seed}: piece (column {b}, list {i}) differs"));
            }
        }
    }
    Ok(())
}

/// `dst[l2 * perm[i]] = src[l1 * i]`, both below and above one block of items.
pub fn check_permute(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = if rng.gen_bool(0.5) { rng.gen_range(0..64) } else { rng.gen_range(64..=1000) };
    let (l1, l2) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let mut perm: Vec<u64> = (0..x as u64).collect();
    for i in (1..x).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let src: Vec<u64> = (0..x * l1).map(|_| rng.gen()).collect();
    let mut m = exec_with_keys(Vec::new());
    let pa = array(&mut m, &perm);
    let sa = array(&mut m, &src);
    let da = m.alloc(x * l2);
    permuting_writes(&mut m, Region::whole(pa), Region::whole(sa).strided(0, l1), x, Region::whole(da).strided(0, l2));
    let got = contents(&m, da);
    for i in 0..x {
        if got[l2 * perm[i] as usize] != src[l1 * i] {
            return Err(format!("seed {seed}: item {i} (x={x}) misplaced"));
        }
    }
    Ok(())
}

/// Ranks every element of several small multi-way merges against brute force.
pub fn check_small_merge(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(1..=5);
    let h = rng.gen_range(1..=5);
    let mut lens = vec![vec![0usize; r]; h];
    let mut total = 0;
    for w in lens.iter_mut() {
        for l in w.iter_mut() {
            *l = rng.gen_range(0..=30);
            total += *l;
        }
    }
    let keys = random_keys(&mut rng, total);
    let mut lists: Vec<Vec<Vec<u64>>> = Vec::new();
    let mut next = 0u64;
    for w in &lens {
        let mut problem = Vec::new();
        for &l in w {
            problem.push(sorted_ids(&keys, (next..next + l as u64).collect()));
            next += l as u64;
        }
        lists.push(problem);
    }
    let with_base = rng.gen_bool(0.5);
    let bases: Vec<u64> = (0..h * r).map(|_| if with_base { rng.gen_range(0..100) } else { 0 }).collect();
    let y: Vec<u64> = lists.iter().flatten().flatten().copied().collect();
    let mut dir_words = Vec::new();
    let mut at = 0;
    for w in &lens {
        for &l in w {
            dir_words.push(l as u64);
            dir_words.push(at as u64);
            at += l;
        }
    }
    let stride = 2 * r + 1;
    let mut m = exec_with_keys(keys.clone());
    let ya = array(&mut m, &y);
    let da = array(&mut m, &dir_words);
    let ba = array(&mut m, &bases);
    let out = m.alloc(total * stride);
    small_multi_merge(
        &mut m,
        Region::whole(ya),
        Directory::new(Region::whole(da)),
        r,
        with_base.then(|| Region::whole(ba)),
        Region::whole(out),
    );
    let got = contents(&m, out);
    let mut first = 0;
    for (w, problem) in lists.iter().enumerate() {
        let all: Vec<u64> = sorted_ids(&keys, problem.concat());
        for (p, &e) in all.iter().enumerate() {
            let row = (first + p) * stride;
            if got[row] != e {
                return Err(format!("seed {seed}: problem {w} position {p} holds the wrong element"));
            }
            for (i, list) in problem.iter().enumerate() {
                let c = list.iter().filter(|&&x| before(&keys, x, e)).count() as u64 + bases[w * r + i];
                if got[row + 1 + 2 * i] != c || got[row + 2 + 2 * i] != c + 1 {
                    return Err(format!("seed {seed}: problem {w} element {p} straddle for list {i} wrong"));
                }
            }
        }
        first += all.len();
    }
    Ok(())
}
