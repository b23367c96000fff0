use leap_core::corpus::CLEAN_CUCUMBER;
use leap_core::semantics::{
    chain, execute, execute_with, holds, parse_overlay, step, EvalMode, ExecOptions,
    ViolationReason, DEFAULT_FUEL,
};
use leap_core::testing::{arb_condition, arb_program, arb_subaction};
use leap_core::{parse_program, Condition, ObjectName, Predicate, Program, SchemaTable, Truth, WorldState};
use proptest::prelude::*;

fn obj(s: &str) -> ObjectName {
    ObjectName::new(s).unwrap()
}

fn prog(name: &str, body: &str) -> Program {
    parse_program(&format!("def {name}(start_t=0, stop_t=1):\n{body}")).unwrap()
}

fn state(text: &str) -> WorldState {
    WorldState::parse(text).unwrap()
}

fn arb_state() -> impl Strategy<Value = WorldState> {
    prop::collection::vec(arb_condition(), 0..6)
        .prop_map(|cs| cs.iter().fold(WorldState::new(), |s, c| s.with(c)))
}

proptest! {
    #[test]
    fn negation_flips_known_truth(s in arb_state(), c in arb_condition()) {
        let t = holds(&s, &c);
        prop_assert_eq!(holds(&s, &c.negate()), t.negate());
        prop_assert_eq!(holds(&s.clone().with(&c), &c), Truth::True);
    }

    #[test]
    fn steps_only_touch_their_arguments(s in arb_state(), sa in arb_subaction()) {
        let table = SchemaTable::default();
        let out = step(&s, &sa, &table).unwrap();
        for (p, v) in s.iter() {
            if p.args().iter().all(|a| !sa.args.contains(a)) {
                prop_assert_eq!(out.state.get(p), Truth::from(v));
            }
        }
        if out.failure.is_some() {
            prop_assert_eq!(&out.state, &s);
        }
    }

    #[test]
    fn execution_is_deterministic(p in arb_program(), s in arb_state()) {
        let table = SchemaTable::default();
        for mode in [EvalMode::Optimistic, EvalMode::Strict, EvalMode::ClosedWorld] {
            let opts = ExecOptions { mode, fuel: 8 };
            prop_assert_eq!(execute_with(&p, &s, &table, opts), execute_with(&p, &s, &table, opts));
        }
    }

    #[test]
    fn strict_finds_at_least_the_optimistic_violations(p in arb_program(), s in arb_state()) {
        let table = SchemaTable::default();
        let opt = execute_with(&p, &s, &table, ExecOptions { mode: EvalMode::Optimistic, fuel: 8 });
        let strict = execute_with(&p, &s, &table, ExecOptions { mode: EvalMode::Strict, fuel: 8 });
        prop_assert_eq!(opt.valid, opt.violations.is_empty());
        if !opt.valid {
            prop_assert!(!strict.valid);
        }
    }

    #[test]
    fn chain_threads_final_state(a in arb_program(), b in arb_program(), s in arb_state()) {
        let table = SchemaTable::default();
        let ra = execute(&a, &s, &table, 8);
        let rb = execute(&b, &ra.final_state, &table, 8);
        let rc = chain(&[a, b], &s, &table, 8);
        prop_assert_eq!(&rc.final_state, &rb.final_state);
        prop_assert_eq!(rc.violations.len(), ra.violations.len() + rb.violations.len());
        prop_assert_eq!(rc.trace.len(), ra.trace.len() + rb.trace.len());
        prop_assert_eq!(rc.boundaries, vec![0, ra.trace.len()]);
    }
}

#[test]
fn clean_cucumber_loop_spends_all_fuel_without_an_effect() {
    let p = parse_program(CLEAN_CUCUMBER).unwrap();
    let init = state("cucumber not clean\n");
    let r = execute(&p, &init, &SchemaTable::default(), DEFAULT_FUEL);
    assert!(r.fuel_exhausted);
    assert!(r.valid);
    assert_eq!(r.loop_iterations.values().sum::<usize>(), DEFAULT_FUEL);
}

#[test]
fn clean_cucumber_loop_runs_once_with_a_cleaning_overlay() {
    let p = parse_program(CLEAN_CUCUMBER).unwrap();
    let overlay =
        parse_overlay("use(2): pre x in hand, y at workspace | y in hand; post y clean=true\n").unwrap();
    let table = SchemaTable::default().with_overlay(overlay);
    let r = execute(&p, &state("cucumber not clean\n"), &table, DEFAULT_FUEL);
    assert!(r.valid);
    assert!(!r.fuel_exhausted);
    assert_eq!(r.loop_iterations.values().copied().collect::<Vec<_>>(), [1]);
    assert_eq!(r.final_state.get(&Predicate::Clean(obj("cucumber"))), Truth::True);
}

#[test]
fn move_milk_to_table_is_valid_from_nothing() {
    let p = prog("move_milk_to_table", "    goto(milk)\n    grasp(milk)\n    goto(table)\n    release(milk)\n");
    let r = execute(&p, &WorldState::new(), &SchemaTable::default(), DEFAULT_FUEL);
    assert!(r.valid, "{:?}", r.violations);
    assert_eq!(r.final_state.get(&Predicate::InHand(obj("milk"))), Truth::False);
    assert_eq!(r.final_state.get(&Predicate::At(obj("milk"))), Truth::True);
}

#[test]
fn goto_after_grasp_of_the_same_object_is_one_violation() {
    let p = prog("bad", "    goto(milk)\n    grasp(milk)\n    goto(milk)\n    goto(table)\n    release(milk)\n");
    let r = execute(&p, &WorldState::new(), &SchemaTable::default(), DEFAULT_FUEL);
    assert_eq!(r.violations.len(), 1);
    let v = &r.violations[0];
    assert_eq!(v.step, 2);
    assert_eq!(v.failed, Condition::not(Predicate::At(obj("milk"))));
    assert_eq!(v.reason, ViolationReason::Contradicted);
}

#[test]
fn pouring_after_release_breaks_the_chain() {
    let mv = prog("move_milk_to_table", "    goto(milk)\n    grasp(milk)\n    goto(table)\n    release(milk)\n");
    let pour = prog("pour_milk", "    use(milk, cup)\n");
    let r = chain(&[mv, pour], &WorldState::new(), &SchemaTable::default(), DEFAULT_FUEL);
    assert_eq!(r.violations.len(), 1);
    let v = &r.violations[0];
    assert_eq!((v.program, v.step), (1, 4));
    assert_eq!(v.failed, Condition::holds(Predicate::InHand(obj("milk"))));
}

#[test]
fn using_a_knife_on_a_carrot_needs_a_hand_on_them() {
    let p = prog("cut", "    use(knife, carrot)\n");
    let init = state("knife not in hand\ncarrot not in hand\n");
    let r = execute(&p, &init, &SchemaTable::default(), DEFAULT_FUEL);
    assert!(!r.valid);
    assert_eq!(r.violations[0].failed, Condition::holds(Predicate::InHand(obj("knife"))));
}

#[test]
fn goto_grasp_release_from_empty_state() {
    let p = prog("t", "    goto(milk)\n    grasp(milk)\n    release(milk)\n");
    let r = execute(&p, &WorldState::new(), &SchemaTable::default(), DEFAULT_FUEL);
    assert!(r.valid);
    assert_eq!(r.final_state, state("milk at workspace\nmilk not in hand\n"));
}
