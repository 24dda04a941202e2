//! Builds a small book by hand, prices a marketable order against it, and
//! shows how a revision loses queue priority.
//!
//! ```text
//! cargo run --example book_mechanics
//! ```

use lobsurv::book::{BookState, LobEvent, Side};

fn print_side(book: &BookState, side: Side) {
    for (price, queue) in book.iter_levels(side) {
        let orders: Vec<String> = queue.iter().map(|o| format!("{}:{}", o.order_id, o.remaining_size)).collect();
        println!("  {side:?} {price}: {}", orders.join(" "));
    }
}

pub fn run() -> lobsurv::Result<()> {
    let mut book = BookState::new();
    let events = [
        LobEvent::submit(0, 0, "b1", Side::Bid, 2700, 200),
        LobEvent::submit(0, 1, "b2", Side::Bid, 2699, 300),
        LobEvent::submit(0, 2, "a1", Side::Ask, 2702, 70),
        LobEvent::submit(0, 3, "a2", Side::Ask, 2702, 100),
        LobEvent::submit(0, 4, "a3", Side::Ask, 2704, 150),
        LobEvent::submit(0, 5, "a4", Side::Ask, 2705, 120),
    ];
    for e in &events {
        book.apply_event(e)?;
    }
    println!("spread {:?} ticks, mid {:?}", book.spread(), book.mid_price().map(|m| m.as_ticks()));
    print_side(&book, Side::Ask);
    print_side(&book, Side::Bid);

    println!("a market buy for 200 shares would fill:");
    for f in book.sweep(Side::Bid, 200) {
        println!("  {} shares of {} at {}", f.size, f.order_id, f.price);
    }

    // a new sell at 2705 queues behind a4
    book.apply_event(&LobEvent::submit(1_000, 6, "s1", Side::Ask, 2705, 300))?;
    // resubmitting a1 sends it to the back of its level
    book.apply_event(&LobEvent::submit(2_000, 7, "a1", Side::Ask, 2702, 70))?;
    println!("after s1 and the a1 revision:");
    print_side(&book, Side::Ask);

    let top = book.depth_stats(Side::Ask, 1);
    println!(
        "best ask level: {} orders, {} shares, {} revised, mean age {:.1} ms",
        top.order_count, top.total_volume, top.modified_count, top.mean_age_ms
    );

    let crossing = LobEvent::submit(3_000, 8, "x", Side::Bid, 2702, 10);
    if let Err(e) = book.apply_event(&crossing) {
        println!("rejected: {e}");
    }
    book.check_invariants().expect("book stays consistent");
    Ok(())
}

#[allow(dead_code)]
fn main() -> lobsurv::Result<()> {
    run()
}
