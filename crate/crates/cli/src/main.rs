fn main() {
    println!("eflab");
}
