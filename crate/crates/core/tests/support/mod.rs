pub mod camcheck;
pub mod gradcheck;
pub mod oracle;
