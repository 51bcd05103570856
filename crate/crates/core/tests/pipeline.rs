use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use svqa_core::corpus::{
    ingest_specialist, make_splits, synthesize_tabular_reports, BiomarkerSchema, ClusterLabels,
    ClusteredImage, ImageIndex, SplitFractions, ABSENT_COUNT,
};
use svqa_core::eval_harness::{
    load_cases, run_task, EvalConfig, EvalTask, HttpEndpoint, NativeDialect, OracleEndpoint,
    ReferralTask, StagingTask,
};
use svqa_core::read_jsonl;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/fixture")
        .join(name)
}

#[test]
fn fixture_corpus_synthesizes_and_splits() {
    let schema = BiomarkerSchema::default();
    let images = ImageIndex::load(&fixture("images.jsonl")).unwrap();
    let clustered: Vec<ClusteredImage> = read_jsonl(&fixture("clustered.jsonl")).unwrap();
    let clusters: ClusterLabels =
        serde_json::from_str(&std::fs::read_to_string(fixture("clusters.json")).unwrap()).unwrap();

    let reports = synthesize_tabular_reports(&clustered, &clusters, &schema, 7).unwrap();
    assert_eq!(reports.len(), clustered.len());
    for r in &reports {
        assert!(images.contains(&r.image_id));
        assert_eq!(r.absent_biomarkers.len(), ABSENT_COUNT);
        let present: BTreeSet<_> = r.present_biomarkers.iter().collect();
        assert!(r.absent_biomarkers.iter().all(|a| !present.contains(a)));
    }
    let mut reversed = clustered.clone();
    reversed.reverse();
    let again = synthesize_tabular_reports(&reversed, &clusters, &schema, 7).unwrap();
    for r in &reports {
        assert!(again.contains(r));
    }

    let specialist = ingest_specialist(&fixture("specialist.jsonl")).unwrap();
    assert!(specialist.rejects.is_empty());
    assert_eq!(specialist.records.len(), 12);

    let all = images.to_vec();
    let fractions = SplitFractions::new(0.5, 0.25, 0.25).unwrap();
    let a = make_splits(&all, fractions, 7).unwrap();
    let b = make_splits(&all, fractions, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.assignments.len(), all.len());
    for img in &all {
        for other in all.iter().filter(|o| o.patient_id == img.patient_id) {
            assert_eq!(a.assignments[&img.image_id], a.assignments[&other.image_id]);
        }
    }
}

#[test]
fn http_endpoint_matches_in_process_oracle() {
    let cases = load_cases(&fixture("cases.jsonl")).unwrap();
    let server =
        svqa_core::eval_harness::serve(Arc::new(OracleEndpoint::new(&cases)), "127.0.0.1:0", 2)
            .unwrap();
    let remote = HttpEndpoint::new(&server.base_url(), Duration::from_secs(10)).unwrap();
    let local = OracleEndpoint::new(&cases);
    let cfg = EvalConfig::default();
    let tasks: [Box<dyn EvalTask>; 2] =
        [Box::new(StagingTask::new()), Box::new(ReferralTask::new())];
    for task in &tasks {
        let over_http = run_task(&cases, task.as_ref(), &remote, &NativeDialect, &cfg);
        let in_process = run_task(&cases, task.as_ref(), &local, &NativeDialect, &cfg);
        assert_eq!(over_http.transcripts.len(), in_process.transcripts.len());
        for (h, l) in over_http.transcripts.iter().zip(&in_process.transcripts) {
            assert_eq!(h.image_id, l.image_id);
            assert_eq!(h.extracted_label, l.extracted_label);
            assert_eq!(h.extracted_label, h.ground_truth);
            assert!(h.endpoint_error.is_none());
        }
    }
}
