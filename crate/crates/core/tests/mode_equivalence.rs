//! The central equivalence property: for every corpus query, forced-local
//! output is byte-identical to parallel output for every partition count
//! and worker count, including error text.

mod common;

use common::{corpus, run_to_text, test_engine, verify_mode_equivalence};

const PARTITIONS: [usize; 5] = [1, 2, 3, 7, 16];

#[test]
fn forced_local_equals_parallel_everywhere() {
    let (queries, runs) = verify_mode_equivalence();
    println!("mode equivalence: {queries} queries verified ({runs} runs)");
}

#[test]
fn partition_count_never_changes_results() {
    // Same property, squinting at partition structure only: the logical
    // content of every partitioned output is identical for all partition
    // counts even though the partition boundaries differ.
    let corpus = corpus();
    let query = format!(
        "for $r in json-file(\"{}/numbers.jsonl\") count $c return {{\"c\": $c, \"n\": $r.n}}",
        corpus.dir.display()
    );
    let mut first: Option<String> = None;
    for p in PARTITIONS {
        let engine = test_engine(2, p);
        let text = run_to_text(&engine, &query, false);
        match &first {
            None => first = Some(text),
            Some(expected) => assert_eq!(&text, expected, "partitions={p}"),
        }
    }
}
