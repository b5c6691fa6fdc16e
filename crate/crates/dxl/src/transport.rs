//! Byte transports for the servo bus.

use std::time::Duration;

use crate::error::{TransportError, UsageError};

pub const MIN_BAUD: u32 = 9_600;
pub const MAX_BAUD: u32 = 4_500_000;

pub fn check_baud(baud: u32) -> Result<u32, UsageError> {
    if (MIN_BAUD..=MAX_BAUD).contains(&baud) {
        Ok(baud)
    } else {
        Err(UsageError::BaudRate(baud))
    }
}

/// A half-duplex byte stream. One transaction is outstanding at a time.
pub trait Transport: Send {
    fn write_all(&mut self, bytes: &[u8]) -> Result<(), TransportError>;

    /// Reads whatever arrives within `timeout`. `Ok(0)` means the timeout
    /// elapsed with nothing received.
    fn read(&mut self, buf: &mut [u8], timeout: Duration) -> Result<usize, TransportError>;

    /// Discards stale input before a new transaction.
    fn clear_input(&mut self) -> Result<(), TransportError> {
        Ok(())
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn write_all(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        (**self).write_all(bytes)
    }

    fn read(&mut self, buf: &mut [u8], timeout: Duration) -> Result<usize, TransportError> {
        (**self).read(buf, timeout)
    }

    fn clear_input(&mut self) -> Result<(), TransportError> {
        (**self).clear_input()
    }
}

#[cfg(target_os = "linux")]
pub use serial::SerialTransport;

#[cfg(target_os = "linux")]
mod serial {
    use std::fs::{File, OpenOptions};
    use std::io::{Read, Write};
    use std::os::fd::AsRawFd;
    use std::os::unix::fs::OpenOptionsExt;
    use std::time::Duration;

    use super::{check_baud, Transport};
    use crate::error::TransportError;

    /// Raw 8N1 serial line at an arbitrary baud rate.
    #[derive(Debug)]
    pub struct SerialTransport {
        file: File,
        path: String,
        baud: u32,
    }

    impl SerialTransport {
        pub fn open(path: &str, baud: u32) -> Result<Self, TransportError> {
            let baud = check_baud(baud).map_err(|e| TransportError::Open {
                path: path.to_string(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()),
            })?;
            let open_err = |source| TransportError::Open { path: path.to_string(), source };
            let file = OpenOptions::new()
                .read(true)
                .write(true)
                .custom_flags(libc::O_NOCTTY | libc::O_NONBLOCK)
                .open(path)
                .map_err(open_err)?;
            configure(&file, baud).map_err(open_err)?;
            Ok(SerialTransport { file, path: path.to_string(), baud })
        }

        pub fn path(&self) -> &str {
            &self.path
        }

        pub fn baud(&self) -> u32 {
            self.baud
        }
    }

    fn configure(file: &File, baud: u32) -> std::io::Result<()> {
        let fd = file.as_raw_fd();
        // SAFETY: termios2 is plain old data and the ioctls only read/write it.
        unsafe {
            let mut tio: libc::termios2 = std::mem::zeroed();
            if libc::ioctl(fd, libc::TCGETS2, &mut tio) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            tio.c_iflag = 0;
            tio.c_oflag = 0;
            tio.c_lflag = 0;
            tio.c_cflag &= !(libc::CBAUD | libc::CSIZE | libc::PARENB | libc::CSTOPB | libc::CRTSCTS);
            tio.c_cflag |= libc::BOTHER | libc::CS8 | libc::CLOCAL | libc::CREAD;
            tio.c_ispeed = baud;
            tio.c_ospeed = baud;
            tio.c_cc[libc::VMIN] = 0;
            tio.c_cc[libc::VTIME] = 0;
            if libc::ioctl(fd, libc::TCSETS2, &tio) != 0 {
                return Err(std::io::Error::last_os_error());
            }
        }
        Ok(())
    }

    impl Transport for SerialTransport {
        fn write_all(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
            let mut rest = bytes;
            while !rest.is_empty() {
                match self.file.write(rest) {
                    Ok(0) => return Err(TransportError::Disconnected),
                    Ok(n) => rest = &rest[n..],
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_micros(100));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(())
        }

        fn read(&mut self, buf: &mut [u8], timeout: Duration) -> Result<usize, TransportError> {
            let mut pfd = libc::pollfd { fd: self.file.as_raw_fd(), events: libc::POLLIN, revents: 0 };
            let ms = timeout.as_millis().min(i32::MAX as u128) as i32;
            // SAFETY: pfd is a valid pollfd for the duration of the call.
            let ready = unsafe { libc::poll(&mut pfd, 1, ms) };
            if ready < 0 {
                return Err(std::io::Error::last_os_error().into());
            }
            if ready == 0 {
                return Ok(0);
            }
            if pfd.revents & (libc::POLLHUP | libc::POLLERR) != 0 {
                return Err(TransportError::Disconnected);
            }
            match self.file.read(buf) {
                Ok(n) => Ok(n),
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => Ok(0),
                Err(e) => Err(e.into()),
            }
        }

        fn clear_input(&mut self) -> Result<(), TransportError> {
            // SAFETY: plain ioctl on an owned descriptor.
            unsafe {
                libc::tcflush(self.file.as_raw_fd(), libc::TCIFLUSH);
            }
            Ok(())
        }
    }
}
