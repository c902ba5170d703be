#[test]
fn acceptance() {
    let verdicts: Vec<_> = sideband_validation::all().into_iter().map(|c| c()).collect();
    for v in &verdicts {
        println!("{}", v.line());
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    println!("{}/{} criteria passed", verdicts.len() - failed.len(), verdicts.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
